//! Operator tools for the udp-mesh transport.
//!
//! `umesh pub|sub|status|set-priority` talk to a running daemon through
//! its local control socket; `bench` joins the mesh as a transient node;
//! `sim` runs a scenario file through the deterministic simulator.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use udp_mesh::bench;
use udp_mesh::config::{default_control_socket, DaemonConfig};
use udp_mesh::daemon::MeshNode;
use udp_mesh::ipc;
use udp_mesh::simnet::{mean_std, run_scenario, Scenario};

mod daemon_main;

#[derive(Parser)]
#[command(name = "umesh", version, about = "Operator tools for the udp-mesh transport")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Publish one payload on a topic through a running daemon.
    Pub {
        topic: String,
        /// Payload file; stdin when omitted.
        #[arg(long)]
        file: Option<PathBuf>,
        /// Daemon control socket path.
        #[arg(long)]
        socket: Option<PathBuf>,
        /// Node name, used to locate the default control socket.
        #[arg(long, default_value = "node")]
        node: String,
    },
    /// Stream deliveries on a topic; one header line per message.
    Sub {
        topic: String,
        #[arg(long)]
        socket: Option<PathBuf>,
        #[arg(long, default_value = "node")]
        node: String,
        /// Write raw payload bytes to stdout instead of header lines.
        #[arg(long)]
        raw: bool,
    },
    /// Print the daemon's peer table, topics, and counters.
    Status {
        #[arg(long)]
        socket: Option<PathBuf>,
        #[arg(long, default_value = "node")]
        node: String,
    },
    /// Change a topic's priority at runtime (0 = highest, 255 = lowest).
    SetPriority {
        topic: String,
        priority: u8,
        #[arg(long)]
        socket: Option<PathBuf>,
        #[arg(long, default_value = "node")]
        node: String,
    },
    /// Measure payload throughput to a peer from a transient node.
    Bench {
        /// Destination node name (must be running and reachable).
        #[arg(long)]
        dest: String,
        /// Total payload volume to move.
        #[arg(long)]
        bytes: u64,
        /// Per-message payload size in bytes.
        #[arg(long, default_value_t = 1_048_576)]
        payload: usize,
        /// Daemon config describing how the bench node joins the mesh.
        #[arg(long)]
        config: PathBuf,
        /// Give up waiting for the destination after this many seconds.
        #[arg(long, default_value_t = 30)]
        wait_s: u64,
    },
    /// Run a scenario through the deterministic simulator.
    Sim {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Directory for the CSV outputs; omitted = summary only.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the node daemon in the foreground (same as `udpmeshd`).
    Daemon {
        #[arg(long)]
        config: PathBuf,
    },
}

fn socket_path(socket: Option<PathBuf>, node: &str) -> PathBuf {
    socket.unwrap_or_else(|| default_control_socket(node))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().cmd {
        Cmd::Pub { topic, file, socket, node } => {
            let payload = match file {
                Some(path) => std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?,
                None => {
                    let mut buf = Vec::new();
                    std::io::stdin().read_to_end(&mut buf).context("reading stdin")?;
                    buf
                }
            };
            let len = payload.len();
            ipc::client::publish(&socket_path(socket, &node), &topic, &payload)
                .context("publish over control socket")?;
            println!("published topic={topic} bytes={len}");
        }
        Cmd::Sub { topic, socket, node, raw } => {
            ipc::client::subscribe(&socket_path(socket, &node), &topic, |src, topic, payload| {
                if raw {
                    let mut out = std::io::stdout().lock();
                    let _ = out.write_all(&payload);
                    let _ = out.flush();
                } else {
                    println!("source={src} topic={topic} bytes={}", payload.len());
                }
                true
            })
            .context("subscribe over control socket")?;
        }
        Cmd::Status { socket, node } => {
            let report =
                ipc::client::status(&socket_path(socket, &node)).context("status over control socket")?;
            print!("{report}");
        }
        Cmd::SetPriority { topic, priority, socket, node } => {
            ipc::client::set_priority(&socket_path(socket, &node), &topic, priority)
                .context("set-priority over control socket")?;
            println!("ok topic={topic} priority={priority}");
        }
        Cmd::Bench { dest, bytes, payload, config, wait_s } => {
            let cfg = DaemonConfig::load(&config)?;
            let node = MeshNode::spawn(cfg)?;
            let report = bench::run(&node, &dest, bytes, payload, "bench", Duration::from_secs(wait_s))?;
            node.shutdown();
            println!("{report}");
            if !report.complete {
                bail!("bench incomplete: {}", report.note.unwrap_or_default());
            }
        }
        Cmd::Sim { scenario, seed, out } => {
            let scenario = Scenario::load(&scenario)?;
            let stats = run_scenario(&scenario, seed)?;
            print!("{}", stats.summary());
            // Reference line for notionally periodic topics: observed
            // intermessage statistics next to the configured period.
            for t in &scenario.traffic {
                for stream in stats.arrival_streams() {
                    if stream.1 == t.node && stream.2 == t.topic {
                        let gaps = stats.intermessage(&stream.0, &stream.1, &stream.2);
                        if gaps.len() >= 2 {
                            let (mean, std) = mean_std(&gaps);
                            println!(
                                "reference node={} source={} topic={} period_s={:.3} \
                                 observed_mean_s={mean:.4} observed_std_s={std:.4}",
                                stream.0,
                                stream.1,
                                stream.2,
                                1.0 / t.rate_hz
                            );
                        }
                    }
                }
            }
            if let Some(dir) = out {
                stats.write_csvs(&dir).with_context(|| format!("writing CSVs to {}", dir.display()))?;
                println!("csv_out={}", dir.display());
            }
        }
        Cmd::Daemon { config } => daemon_main::run(&config)?,
    }
    Ok(())
}
