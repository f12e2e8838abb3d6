//! Daemon configuration: versioned TOML, documented in `FORMATS.md`.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::node::NodeConfig;
use crate::peers::LivenessConfig;
use crate::reliable::ReliableConfig;
use crate::topics::TopicConfig;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Default UDP port for node traffic and discovery.
pub const DEFAULT_PORT: u16 = 4950;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// TOML errors carry the offending line and field.
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config field {field}: {problem}")]
    Field { field: &'static str, problem: String },
}

fn field_err(field: &'static str, problem: impl Into<String>) -> ConfigError {
    ConfigError::Field { field, problem: problem.into() }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LivenessFile {
    heartbeat_period_ms: Option<u64>,
    offline_timeout_ms: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReliableFile {
    window: Option<usize>,
    retransmit_initial_ms: Option<u64>,
    retransmit_max_ms: Option<u64>,
    reassembly_timeout_ms: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct DaemonFile {
    version: u32,
    name: String,
    bind: String,
    broadcast: Option<String>,
    #[serde(default)]
    peers: Vec<String>,
    control_socket: Option<PathBuf>,
    #[serde(default)]
    liveness: LivenessFile,
    #[serde(default)]
    reliable: ReliableFile,
    #[serde(default)]
    topics: Vec<TopicConfig>,
}

/// Fully resolved daemon configuration.
#[derive(Debug, Clone)]
pub struct DaemonConfig {
    pub node: NodeConfig,
    /// Local UDP bind address (port 0 picks an ephemeral port).
    pub bind: SocketAddr,
    /// Directed-broadcast address for discovery, when the network allows it.
    pub broadcast: Option<SocketAddr>,
    /// Static peer addresses; the fallback where broadcast is blocked.
    /// Heartbeats and broadcast data also fan out to every address learned
    /// through discovery.
    pub static_peers: Vec<SocketAddr>,
    /// Unix socket path for the local pub/sub and control surface.
    pub control_socket: PathBuf,
}

impl DaemonConfig {
    pub fn new(name: &str, bind: SocketAddr) -> DaemonConfig {
        DaemonConfig {
            node: NodeConfig::new(name),
            bind,
            broadcast: None,
            static_peers: Vec::new(),
            control_socket: default_control_socket(name),
        }
    }

    pub fn load(path: &Path) -> Result<DaemonConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        DaemonConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<DaemonConfig, ConfigError> {
        let file: DaemonFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if file.version != CONFIG_SCHEMA_VERSION {
            return Err(field_err(
                "version",
                format!("expected {CONFIG_SCHEMA_VERSION}, got {}", file.version),
            ));
        }
        if file.name.is_empty() {
            return Err(field_err("name", "must not be empty"));
        }
        let bind: SocketAddr =
            file.bind.parse().map_err(|e| field_err("bind", format!("{:?}: {e}", file.bind)))?;
        let broadcast = match &file.broadcast {
            None => None,
            Some(s) => Some(s.parse().map_err(|e| field_err("broadcast", format!("{s:?}: {e}")))?),
        };
        let mut static_peers = Vec::new();
        for p in &file.peers {
            static_peers.push(p.parse().map_err(|e| field_err("peers", format!("{p:?}: {e}")))?);
        }

        let mut node = NodeConfig::new(&file.name);
        let mut liveness = LivenessConfig::default();
        if let Some(ms) = file.liveness.heartbeat_period_ms {
            liveness.heartbeat_period = Duration::from_millis(ms);
        }
        if let Some(ms) = file.liveness.offline_timeout_ms {
            liveness.offline_timeout = Duration::from_millis(ms);
        }
        liveness.validate().map_err(|e| field_err("liveness", e))?;
        let mut reliable = ReliableConfig::default();
        if let Some(w) = file.reliable.window {
            reliable.window = w;
        }
        if let Some(ms) = file.reliable.retransmit_initial_ms {
            reliable.retransmit_initial = Duration::from_millis(ms);
        }
        if let Some(ms) = file.reliable.retransmit_max_ms {
            reliable.retransmit_max = Duration::from_millis(ms);
        }
        if let Some(ms) = file.reliable.reassembly_timeout_ms {
            reliable.reassembly_timeout = Duration::from_millis(ms);
        }
        reliable.validate().map_err(|e| field_err("reliable", e))?;
        node.liveness = liveness;
        node.reliable = reliable;
        node.topics = file.topics;

        Ok(DaemonConfig {
            node,
            bind,
            broadcast,
            static_peers,
            control_socket: file.control_socket.unwrap_or_else(|| default_control_socket(&file.name)),
        })
    }
}

pub fn default_control_socket(node_name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("udpmesh-{node_name}.sock"))
}
