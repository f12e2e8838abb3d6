//! Run a scenario file through the deterministic simulator and write the
//! CSV outputs — the library form of `umesh sim`.
//!
//! ```bash
//! cargo run --example simulate -- scenarios/final_run_shape.toml 42 /tmp/sim-out
//! ```

use std::path::{Path, PathBuf};

use udp_mesh::simnet::{run_scenario, Scenario};

fn main() {
    let mut args = std::env::args().skip(1);
    let scenario_path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/telemetry_only.toml"));
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let out = args.next().map(PathBuf::from);

    let scenario = Scenario::load(&scenario_path).expect("scenario parses");
    println!("running {} with seed {seed}...", scenario_path.display());
    let stats = run_scenario(&scenario, seed).expect("scenario runs");
    print!("{}", stats.summary());

    if let Some(dir) = out {
        stats.write_csvs(&dir).expect("write CSVs");
        println!("wrote arrivals.csv, topics.csv, connectivity.csv, counters.csv to {}", dir.display());
    }
}
