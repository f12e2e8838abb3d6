//! Guaranteed delivery of a large message over real loopback sockets:
//! fragmentation, a 3-fragment in-flight window, per-fragment acks, and
//! reassembly, all behind one `publish` call.
//!
//! ```bash
//! cargo run --release --example reliable_transfer
//! ```

use std::time::{Duration, Instant};

use udp_mesh::config::DaemonConfig;
use udp_mesh::daemon::MeshNode;
use udp_mesh::topics::{TopicConfig, TopicMode};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let tmp = std::env::temp_dir();

    let mut cfg = DaemonConfig::new("sink", "127.0.0.1:0".parse().unwrap());
    cfg.control_socket = tmp.join("example-sink.sock");
    let sink = MeshNode::spawn(cfg).expect("spawn sink");

    let mut cfg = DaemonConfig::new("source", "127.0.0.1:0".parse().unwrap());
    cfg.control_socket = tmp.join("example-source.sock");
    cfg.static_peers = vec![sink.local_addr()];
    cfg.node.topics = vec![TopicConfig {
        name: "map".into(),
        priority: 50,
        mode: TopicMode::Reliable { dest: "sink".into() },
    }];
    let source = MeshNode::spawn(cfg).expect("spawn source");

    // The publisher must have discovered its destination.
    while !source.status().unwrap().peers.iter().any(|p| p.name == "sink" && p.state == "online") {
        std::thread::sleep(Duration::from_millis(50));
    }

    let sub = sink.subscribe("map");
    let payload: Vec<u8> = (0..8_000_000u32).map(|i| (i.wrapping_mul(2_654_435_761) >> 7) as u8).collect();
    println!("publishing {} bytes on topic \"map\"...", payload.len());

    let started = Instant::now();
    source.publish("map", payload.clone()).expect("publish");
    let delivery = sub.recv_timeout(Duration::from_secs(60)).expect("delivery");
    let elapsed = started.elapsed();

    assert_eq!(delivery.payload, payload, "delivered bytes are identical");
    println!(
        "delivered {} bytes from {} in {:.2}s ({:.1} Mbit/s payload)",
        delivery.payload.len(),
        delivery.source_name,
        elapsed.as_secs_f64(),
        delivery.payload.len() as f64 * 8.0 / elapsed.as_secs_f64() / 1e6
    );

    let stats = source.status().unwrap().stats;
    println!("fragments sent: {}, retransmits: {}", stats.data_sent, stats.retransmits);

    source.shutdown();
    sink.shutdown();
}
