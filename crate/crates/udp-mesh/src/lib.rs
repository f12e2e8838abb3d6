//! Reliable, priority-aware message transport over UDP datagrams for
//! intermittently connected mesh networks.
//!
//! The transport provides six services on top of plain unicast/broadcast
//! datagrams: node discovery, name resolution, opaque message
//! encapsulation, guaranteed point-to-point transfer, per-topic QoS
//! prioritization, and point-to-multipoint delivery. Payloads are never
//! interpreted — any publish/subscribe ecosystem can sit on top through a
//! thin adapter.
//!
//! The protocol engine ([`node::Node`]) is a pure state machine: it takes
//! datagrams, commands, and timer ticks, and emits datagrams and events.
//! Two hosts drive it:
//!
//! * [`simnet`] — a deterministic discrete-event medium with per-link
//!   loss, latency, jitter, bandwidth, and scripted outages. Same seed,
//!   same scenario, same trace — bit for bit.
//! * [`daemon`] — the production runtime over real UDP sockets, exposing
//!   a local pub/sub and control socket for other processes.
//!
//! The `examples/` directory carries one runnable example per capability;
//! start with `discovery` and `reliable_transfer`.

pub mod bench;
pub mod config;
pub mod daemon;
pub mod ipc;
pub mod multipoint;
pub mod node;
pub mod peers;
pub mod reliable;
pub mod sched;
pub mod simnet;
pub mod time;
pub mod topics;
pub mod wire;

pub use multipoint::BroadcastOutcome;
pub use node::{Node, NodeConfig, NodeError, NodeEvent, PublishOutcome};
pub use peers::{LivenessConfig, PeerRecord, PeerState};
pub use reliable::ReliableConfig;
pub use time::Timestamp;
pub use topics::{InboundDelivery, TopicConfig, TopicMode};
pub use wire::NodeId;
