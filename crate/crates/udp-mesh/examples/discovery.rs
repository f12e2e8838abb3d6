//! Two nodes on loopback discover each other through heartbeats.
//!
//! ```bash
//! cargo run --example discovery
//! ```

use std::time::Duration;

use udp_mesh::config::DaemonConfig;
use udp_mesh::daemon::MeshNode;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();

    let mut cfg = DaemonConfig::new("base", "127.0.0.1:0".parse().unwrap());
    cfg.control_socket = std::env::temp_dir().join("example-base.sock");
    let base = MeshNode::spawn(cfg).expect("spawn base");

    // The robot only needs one reachable address to join; everything else
    // is learned from heartbeats.
    let mut cfg = DaemonConfig::new("d01", "127.0.0.1:0".parse().unwrap());
    cfg.control_socket = std::env::temp_dir().join("example-d01.sock");
    cfg.static_peers = vec![base.local_addr()];
    let robot = MeshNode::spawn(cfg).expect("spawn d01");

    println!("waiting one heartbeat period for mutual discovery...");
    std::thread::sleep(Duration::from_millis(1_500));

    for node in [&base, &robot] {
        let status = node.status().expect("status");
        println!("--- {} sees:", status.name);
        for peer in &status.peers {
            println!(
                "    {} [{}] last heard {:.2}s ago",
                peer.name,
                peer.state,
                peer.last_heard_age.as_secs_f64()
            );
        }
    }

    robot.shutdown();
    base.shutdown();
}
