//! Foreground daemon runner shared by `udpmeshd` and `umesh daemon`.

use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use anyhow::{Context, Result};
use log::info;

use udp_mesh::config::DaemonConfig;
use udp_mesh::daemon::MeshNode;

static STOP: AtomicBool = AtomicBool::new(false);

extern "C" fn on_signal(_sig: libc::c_int) {
    STOP.store(true, Ordering::SeqCst);
}

/// Run until SIGINT/SIGTERM, then abort in-flight transfers and exit
/// cleanly (exit code 0).
pub fn run(config_path: &Path) -> Result<()> {
    let config =
        DaemonConfig::load(config_path).with_context(|| format!("loading {}", config_path.display()))?;
    let control = config.control_socket.clone();
    let node = MeshNode::spawn(config)?;
    info!("node {} up on {} (control socket {})", node.name(), node.local_addr(), control.display());

    let handler = on_signal as extern "C" fn(libc::c_int) as *const () as libc::sighandler_t;
    unsafe {
        libc::signal(libc::SIGTERM, handler);
        libc::signal(libc::SIGINT, handler);
    }
    while !STOP.load(Ordering::SeqCst) {
        std::thread::sleep(Duration::from_millis(100));
    }
    info!("signal received, shutting down");
    node.shutdown();
    Ok(())
}
