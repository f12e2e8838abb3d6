//! Why priorities exist: 1 Hz telemetry sharing one saturated 2 Mbit/s
//! link with bulk map data and low-priority imagery. With the sort key in
//! place telemetry stays on its 1-second cadence; with every topic at one
//! priority it drowns in the FIFO backlog.
//!
//! ```bash
//! cargo run --example prioritization
//! ```

use std::time::Duration;

use udp_mesh::node::NodeConfig;
use udp_mesh::simnet::{make_payload, mean_std, LinkModel, SimNet};
use udp_mesh::topics::{TopicConfig, TopicMode};

fn run(label: &str, priorities: [u8; 3]) {
    let [telemetry_prio, map_prio, fpv_prio] = priorities;
    let mut cfg = NodeConfig::new("robot");
    cfg.topics = vec![
        TopicConfig {
            name: "telemetry".into(),
            priority: telemetry_prio,
            mode: TopicMode::Reliable { dest: "base".into() },
        },
        TopicConfig {
            name: "map_diff".into(),
            priority: map_prio,
            mode: TopicMode::Reliable { dest: "base".into() },
        },
        TopicConfig {
            name: "fpv".into(),
            priority: fpv_prio,
            mode: TopicMode::Reliable { dest: "base".into() },
        },
    ];

    let mut sim = SimNet::new(7);
    let robot = sim.add_node(cfg).unwrap();
    let base = sim.add_node(NodeConfig::new("base")).unwrap();
    sim.add_link(
        robot,
        base,
        LinkModel {
            loss: 0.005,
            latency: Duration::from_millis(5),
            jitter: Duration::from_millis(2),
            bandwidth_bps: 2_000_000,
            down: vec![],
        },
    );
    sim.run_for(Duration::from_secs(2));

    // 300 s of competing traffic: 2.4 kbit/s telemetry, ~1.44 Mbit/s map
    // segments, ~0.8 Mbit/s imagery — more than the link carries.
    for second in 0..300u64 {
        sim.publish(robot, "telemetry", &make_payload(300, 1, second)).unwrap();
        sim.publish(robot, "map_diff", &make_payload(180_000, 2, second)).unwrap();
        sim.publish(robot, "fpv", &make_payload(100_000, 3, second)).unwrap();
        sim.run_for(Duration::from_secs(1));
    }
    sim.run_for(Duration::from_secs(10));

    let times: Vec<f64> =
        sim.deliveries(base).iter().filter(|d| d.topic == "telemetry").map(|d| d.at.as_secs_f64()).collect();
    let gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let (mean, std) = mean_std(&gaps);
    let delivered: u64 = sim.deliveries(base).iter().map(|d| d.len as u64).sum();
    println!(
        "{label:<22} telemetry arrivals {:>3}, intermessage mean {mean:.3}s σ {std:.3}s, {:.1} MB total delivered",
        times.len(),
        delivered as f64 / 1e6
    );
}

fn main() {
    println!("one 2 Mbit/s link, ~2.25 Mbit/s offered load, 300 s:");
    run("prioritized", [10, 200, 250]);
    run("flat priorities", [128, 128, 128]);
}
