//! Liveness: a silent peer goes Offline after the timeout, submissions to
//! it are discarded immediately, and the first heartbeat after the link
//! returns brings it back.
//!
//! ```bash
//! cargo run --example offline_detection
//! ```

use std::time::Duration;

use udp_mesh::node::NodeConfig;
use udp_mesh::simnet::{LinkModel, SimNet};

fn main() {
    let mut sim = SimNet::new(3);
    let base = sim.add_node(NodeConfig::new("base")).unwrap();
    let d01 = sim.add_node(NodeConfig::new("d01")).unwrap();
    sim.add_link(base, d01, LinkModel { latency: Duration::from_millis(10), ..Default::default() });

    sim.run_for(Duration::from_secs(2));
    println!(
        "t={:.1}s  discovered, d01 online: {}",
        sim.now().as_secs_f64(),
        sim.node(base).peers().is_online(sim.node(d01).id())
    );

    println!("t={:.1}s  cutting the link (robot drives around a corner)", sim.now().as_secs_f64());
    sim.set_link_down(base, d01, true);
    sim.run_for(Duration::from_secs(7));
    println!(
        "t={:.1}s  d01 online: {}",
        sim.now().as_secs_f64(),
        sim.node(base).peers().is_online(sim.node(d01).id())
    );

    match sim.submit(base, "d01", "cmd", b"return home", 0) {
        Err(e) => println!("t={:.1}s  submit rejected as expected: {e}", sim.now().as_secs_f64()),
        Ok(_) => unreachable!("submits to offline peers are discarded"),
    }

    println!("t={:.1}s  restoring the link", sim.now().as_secs_f64());
    sim.set_link_down(base, d01, false);
    sim.run_for(Duration::from_secs(2));
    println!(
        "t={:.1}s  d01 online: {}",
        sim.now().as_secs_f64(),
        sim.node(base).peers().is_online(sim.node(d01).id())
    );
    sim.submit(base, "d01", "cmd", b"return home", 0).expect("accepted again");
    println!("t={:.1}s  submit accepted again", sim.now().as_secs_f64());

    println!("\nobserved transitions at base:");
    for t in sim.transitions(base) {
        println!(
            "  t={:.3}s {} -> {}",
            t.at.as_secs_f64(),
            t.peer,
            if t.online { "online" } else { "offline" }
        );
    }
}
