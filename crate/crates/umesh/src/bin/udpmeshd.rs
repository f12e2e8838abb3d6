//! The node daemon: runs the full transport stack on real UDP sockets
//! and exposes the local pub/sub and control socket.

use std::path::PathBuf;

use anyhow::Result;
use clap::Parser;

#[path = "../daemon_main.rs"]
mod daemon_main;

#[derive(Parser)]
#[command(name = "udpmeshd", version, about = "udp-mesh node daemon")]
struct Cli {
    /// Daemon configuration file (TOML; see FORMATS.md).
    #[arg(long)]
    config: PathBuf,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    daemon_main::run(&Cli::parse().config)
}
