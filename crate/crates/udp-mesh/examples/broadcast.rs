//! Point-to-multipoint, both paths: a message that fits one datagram
//! leaves as a single unacknowledged broadcast; a larger one fans out as
//! reliable unicast transfers to every Online peer. Receivers cannot tell
//! which path a message took.
//!
//! ```bash
//! cargo run --example broadcast
//! ```

use std::time::Duration;

use udp_mesh::node::NodeConfig;
use udp_mesh::simnet::{make_payload, LinkModel, SimNet};
use udp_mesh::wire::first_fragment_capacity;
use udp_mesh::BroadcastOutcome;

fn main() {
    let mut sim = SimNet::new(11);
    sim.set_record_payloads(true);
    let base = sim.add_node(NodeConfig::new("base")).unwrap();
    let d01 = sim.add_node(NodeConfig::new("d01")).unwrap();
    let d02 = sim.add_node(NodeConfig::new("d02")).unwrap();
    sim.add_link(base, d01, LinkModel::default());
    sim.add_link(base, d02, LinkModel::default());
    sim.run_for(Duration::from_secs(2));

    let capacity = first_fragment_capacity("estop".len());
    println!("single-datagram capacity for topic \"estop\": {capacity} bytes");

    for size in [64, capacity, capacity + 1, 50_000] {
        let payload = make_payload(size, 5, size as u64);
        let outcome = sim.broadcast(base, "estop", &payload, 0).unwrap();
        sim.run_for(Duration::from_secs(3));
        let path = match &outcome {
            BroadcastOutcome::SingleDatagram => "single unacknowledged datagram".to_owned(),
            BroadcastOutcome::FanOut(ids) => format!("reliable fan-out to {} peers", ids.len()),
        };
        println!("{size:>6} B -> {path}");
        for receiver in [d01, d02] {
            let d = sim.deliveries(receiver).last().unwrap();
            assert_eq!(d.payload.as_ref().unwrap(), &payload);
            println!(
                "        {} got source={} topic={} bytes={} (path invisible)",
                sim.node(receiver).name(),
                d.source_name,
                d.topic,
                d.len
            );
        }
    }
}
