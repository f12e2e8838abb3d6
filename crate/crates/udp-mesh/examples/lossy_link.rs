//! Reliable delivery through a bad radio link, simulated: 20% loss,
//! 50 ± 20 ms latency. The transfer takes as long as it takes; the bytes
//! arrive intact.
//!
//! ```bash
//! cargo run --example lossy_link
//! ```

use std::time::Duration;

use udp_mesh::node::NodeConfig;
use udp_mesh::simnet::{make_payload, LinkModel, SimNet};

fn main() {
    let mut sim = SimNet::new(2024);
    sim.set_record_payloads(true);
    let robot = sim.add_node(NodeConfig::new("robot")).unwrap();
    let base = sim.add_node(NodeConfig::new("base")).unwrap();
    sim.add_link(
        robot,
        base,
        LinkModel {
            loss: 0.20,
            latency: Duration::from_millis(50),
            jitter: Duration::from_millis(20),
            bandwidth_bps: 10_000_000,
            down: vec![],
        },
    );

    // Discovery survives loss too; heartbeats repeat every second.
    while sim.node(robot).peers().resolve("base").is_none() {
        sim.run_for(Duration::from_millis(500));
    }

    let payload = make_payload(1_000_000, 1, 0);
    println!("submitting {} bytes through 20% loss...", payload.len());
    let start = sim.now();
    sim.submit(robot, "base", "map", &payload, 10).unwrap();
    while sim.deliveries(base).is_empty() {
        sim.run_for(Duration::from_secs(5));
    }
    let delivery = &sim.deliveries(base)[0];
    assert_eq!(delivery.payload.as_ref().unwrap(), &payload);

    let stats = sim.node(robot).stats();
    println!(
        "delivered byte-identical after {:.1}s of virtual time; {} fragments sent, {} were retransmits",
        delivery.at.since(start).as_secs_f64(),
        stats.data_sent,
        stats.retransmits
    );
}
