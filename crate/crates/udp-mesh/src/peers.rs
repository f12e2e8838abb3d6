//! Peer discovery, name resolution, and Online/Offline liveness.
//!
//! Nodes announce themselves with periodic heartbeat broadcasts; receipt of
//! a heartbeat or an acknowledgment refreshes the sender's liveness. A peer
//! that stays silent past `offline_timeout` is swept Offline. Records are
//! never deleted, only marked Offline, so name resolution and statistics
//! stay stable across connectivity flaps.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::time::Duration;

use crate::time::Timestamp;
use crate::wire::{Envelope, Kind, NodeId};

/// Heartbeat cadence and the silence window that flips a peer Offline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LivenessConfig {
    pub heartbeat_period: Duration,
    pub offline_timeout: Duration,
}

impl Default for LivenessConfig {
    fn default() -> Self {
        LivenessConfig { heartbeat_period: Duration::from_secs(1), offline_timeout: Duration::from_secs(5) }
    }
}

impl LivenessConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.heartbeat_period.is_zero() {
            return Err("liveness.heartbeat_period must be positive".into());
        }
        if self.offline_timeout < 2 * self.heartbeat_period {
            return Err("liveness.offline_timeout must be at least twice heartbeat_period".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeerState {
    Online,
    Offline,
}

impl PeerState {
    pub fn as_str(self) -> &'static str {
        match self {
            PeerState::Online => "online",
            PeerState::Offline => "offline",
        }
    }
}

/// One discovered node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerRecord {
    pub id: NodeId,
    pub name: String,
    pub addr: SocketAddr,
    pub last_heard: Timestamp,
    pub state: PeerState,
}

/// What an observed datagram did to the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeerEvent {
    /// First heartbeat from a previously unknown node.
    Discovered,
    /// Liveness evidence from a known node already Online (or an ack from
    /// an Offline one; only a heartbeat brings a peer back Online).
    Refreshed,
    /// Heartbeat from a node previously marked Offline.
    CameOnline,
}

#[derive(Debug, Default, Clone, Copy)]
pub struct PeerCounters {
    /// Acks from ids with no record; liveness needs a name first.
    pub acks_from_unknown: u64,
    /// Heartbeats whose advertised name does not hash to their source id.
    pub name_conflicts: u64,
}

/// The peer table. Single-writer: all mutation happens on the protocol
/// thread; other threads get copies via [`PeerTable::snapshot`].
#[derive(Debug)]
pub struct PeerTable {
    config: LivenessConfig,
    records: BTreeMap<NodeId, PeerRecord>,
    by_name: BTreeMap<String, NodeId>,
    counters: PeerCounters,
}

impl PeerTable {
    pub fn new(config: LivenessConfig) -> PeerTable {
        PeerTable {
            config,
            records: BTreeMap::new(),
            by_name: BTreeMap::new(),
            counters: PeerCounters::default(),
        }
    }

    pub fn config(&self) -> &LivenessConfig {
        &self.config
    }

    /// Feed one liveness-bearing datagram (heartbeat or ack) into the table.
    ///
    /// Returns `None` when the datagram taught us nothing (ack from an
    /// unknown id, malformed or conflicting heartbeat).
    pub fn observe(&mut self, env: &Envelope, from: SocketAddr, now: Timestamp) -> Option<PeerEvent> {
        match env.kind {
            Kind::Heartbeat => {
                let name = env.heartbeat_name()?;
                if NodeId::from_name(name) != env.source_id {
                    self.counters.name_conflicts += 1;
                    return None;
                }
                match self.records.get_mut(&env.source_id) {
                    None => {
                        self.records.insert(
                            env.source_id,
                            PeerRecord {
                                id: env.source_id,
                                name: name.to_owned(),
                                addr: from,
                                last_heard: now,
                                state: PeerState::Online,
                            },
                        );
                        self.by_name.insert(name.to_owned(), env.source_id);
                        Some(PeerEvent::Discovered)
                    }
                    Some(rec) => {
                        rec.last_heard = now;
                        rec.addr = from;
                        if rec.state == PeerState::Offline {
                            rec.state = PeerState::Online;
                            Some(PeerEvent::CameOnline)
                        } else {
                            Some(PeerEvent::Refreshed)
                        }
                    }
                }
            }
            Kind::Ack => match self.records.get_mut(&env.source_id) {
                None => {
                    // No record is created from an ack: the name is unknown.
                    self.counters.acks_from_unknown += 1;
                    None
                }
                Some(rec) => {
                    rec.last_heard = now;
                    rec.addr = from;
                    Some(PeerEvent::Refreshed)
                }
            },
            _ => None,
        }
    }

    /// Mark every Online peer silent for longer than `offline_timeout` as
    /// Offline. Each transition is reported exactly once.
    pub fn sweep(&mut self, now: Timestamp) -> Vec<NodeId> {
        let timeout = self.config.offline_timeout;
        let mut transitioned = Vec::new();
        for rec in self.records.values_mut() {
            if rec.state == PeerState::Online && now.since(rec.last_heard) > timeout {
                rec.state = PeerState::Offline;
                transitioned.push(rec.id);
            }
        }
        transitioned
    }

    /// Force a peer Offline (reassembly purge path). Returns true if the
    /// peer was Online.
    pub fn force_offline(&mut self, id: NodeId) -> bool {
        match self.records.get_mut(&id) {
            Some(rec) if rec.state == PeerState::Online => {
                rec.state = PeerState::Offline;
                true
            }
            _ => false,
        }
    }

    pub fn resolve(&self, name: &str) -> Option<(NodeId, SocketAddr)> {
        let id = *self.by_name.get(name)?;
        self.records.get(&id).map(|r| (id, r.addr))
    }

    pub fn get(&self, id: NodeId) -> Option<&PeerRecord> {
        self.records.get(&id)
    }

    pub fn name_of(&self, id: NodeId) -> Option<&str> {
        self.records.get(&id).map(|r| r.name.as_str())
    }

    pub fn is_online(&self, id: NodeId) -> bool {
        self.records.get(&id).is_some_and(|r| r.state == PeerState::Online)
    }

    /// Consistent copy of the table for status reporting.
    pub fn snapshot(&self) -> Vec<PeerRecord> {
        self.records.values().cloned().collect()
    }

    pub fn online_ids(&self) -> Vec<NodeId> {
        self.records.values().filter(|r| r.state == PeerState::Online).map(|r| r.id).collect()
    }

    /// Addresses of every known peer, regardless of state. Used by the
    /// socket medium to fan out broadcast datagrams where layer-2 broadcast
    /// is unavailable.
    pub fn known_addrs(&self) -> Vec<SocketAddr> {
        self.records.values().map(|r| r.addr).collect()
    }

    pub fn counters(&self) -> &PeerCounters {
        &self.counters
    }
}
