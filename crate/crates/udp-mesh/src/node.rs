//! The protocol engine: one node's complete transport state machine.
//!
//! [`Node`] composes the peer table, topic table, transmit scheduler, and
//! reliable transfer state behind three entry points — inbound datagrams,
//! caller commands, and timer ticks — and two outputs: datagrams to send
//! ([`Node::poll_transmit`]) and upward events ([`Node::poll_event`]).
//!
//! The engine never reads a clock or touches a socket. The simulator and
//! the UDP daemon drive the exact same code through this interface, which
//! is what makes the whole stack property-testable: a protocol bug
//! reproduced under virtual time reproduces on real sockets.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::net::SocketAddr;

use thiserror::Error;

use crate::multipoint::{broadcast_plan, BroadcastOutcome};
use crate::peers::{LivenessConfig, PeerEvent, PeerRecord, PeerTable};
use crate::reliable::{AckOutcome, OutboundTransfer, ReassemblyBuffer, ReliableConfig};
use crate::sched::TransmitQueue;
use crate::time::Timestamp;
use crate::topics::{InboundDelivery, TopicConfig, TopicError, TopicMode, TopicTable};
use crate::wire::{
    decode_envelope, encode_envelope, max_message_len, Envelope, Kind, NodeId, WireError, MAX_NAME,
};

/// Completed (source, message_id) pairs remembered per source to suppress
/// duplicate delivery of late retransmitted fragments.
const COMPLETED_MEMORY: usize = 4096;

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub name: String,
    pub liveness: LivenessConfig,
    pub reliable: ReliableConfig,
    pub topics: Vec<TopicConfig>,
}

impl NodeConfig {
    pub fn new(name: &str) -> NodeConfig {
        NodeConfig {
            name: name.to_owned(),
            liveness: LivenessConfig::default(),
            reliable: ReliableConfig::default(),
            topics: Vec::new(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NodeError {
    #[error("unknown topic {0:?}")]
    UnknownTopic(String),
    #[error("unknown peer {0:?}")]
    UnknownPeer(String),
    /// The peer is marked Offline; the message is discarded immediately.
    #[error("peer {0:?} is offline")]
    PeerOffline(String),
    #[error("message exceeds the maximum transferable size")]
    MessageTooLarge,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Topic(#[from] TopicError),
    #[error(transparent)]
    Wire(#[from] WireError),
}

/// Where an outgoing datagram is headed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutAddr {
    Unicast(SocketAddr),
    /// Broadcast: the medium fans this out to every reachable peer.
    AllPeers,
}

/// One encoded datagram ready for the medium.
#[derive(Debug, Clone)]
pub struct Outgoing {
    pub bytes: Vec<u8>,
    pub kind: Kind,
    pub to: OutAddr,
}

/// Why a transfer ended without completing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbortReason {
    PeerOffline,
    Shutdown,
}

/// Asynchronous notifications surfaced to the host.
#[derive(Debug, Clone)]
pub enum NodeEvent {
    PeerDiscovered { id: NodeId, name: String },
    PeerOnline { id: NodeId, name: String },
    PeerOffline { id: NodeId, name: String },
    Delivery(InboundDelivery),
    TransferComplete { dest: NodeId, message_id: u32 },
    TransferAborted { dest: NodeId, message_id: u32, reason: AbortReason },
    ReassemblyPurged { source: NodeId, message_id: u32 },
}

/// What a publish turned into.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PublishOutcome {
    Reliable { message_id: u32 },
    Broadcast(BroadcastOutcome),
}

/// Transport counters, exported for status output and run statistics.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct NodeStats {
    pub heartbeats_sent: u64,
    pub heartbeats_received: u64,
    pub data_sent: u64,
    pub data_received: u64,
    pub acks_sent: u64,
    pub acks_received: u64,
    pub bcast_sent: u64,
    pub bcast_received: u64,
    pub retransmits: u64,
    pub payload_bytes_sent: u64,
    pub payload_bytes_delivered: u64,
    pub messages_delivered: u64,
    pub transfers_completed: u64,
    pub transfers_aborted: u64,
    pub reassemblies_purged: u64,
    pub decode_drops: u64,
    pub stale_acks: u64,
    pub duplicate_fragments: u64,
    pub mismatched_dest: u64,
    pub self_echoes: u64,
    pub publishes_rejected: u64,
}

#[derive(Debug, Default)]
struct CompletedSet {
    recent: HashSet<u32>,
    order: VecDeque<u32>,
}

impl CompletedSet {
    fn contains(&self, id: u32) -> bool {
        self.recent.contains(&id)
    }

    fn insert(&mut self, id: u32) {
        if self.recent.insert(id) {
            self.order.push_back(id);
            if self.order.len() > COMPLETED_MEMORY {
                if let Some(old) = self.order.pop_front() {
                    self.recent.remove(&old);
                }
            }
        }
    }
}

/// The engine. Owned by exactly one thread (the protocol thread in the
/// daemon, the event loop in the simulator); all methods take `&mut self`.
#[derive(Debug)]
pub struct Node {
    id: NodeId,
    name: String,
    liveness: LivenessConfig,
    reliable: ReliableConfig,
    peers: PeerTable,
    topics: TopicTable,
    queue: TransmitQueue,
    transfers: BTreeMap<(NodeId, u32), OutboundTransfer>,
    reassembly: BTreeMap<(NodeId, u32), ReassemblyBuffer>,
    completed: BTreeMap<NodeId, CompletedSet>,
    in_flight_count: BTreeMap<NodeId, usize>,
    next_message_id: u32,
    next_heartbeat: Timestamp,
    outbox: VecDeque<Outgoing>,
    events: VecDeque<NodeEvent>,
    stats: NodeStats,
}

impl Node {
    pub fn new(config: NodeConfig) -> Result<Node, NodeError> {
        if config.name.is_empty() {
            return Err(NodeError::InvalidConfig("node name must not be empty".into()));
        }
        if config.name.len() > MAX_NAME {
            return Err(NodeError::Wire(WireError::OversizeTopic));
        }
        let id = NodeId::from_name(&config.name);
        if id.is_broadcast() {
            return Err(NodeError::InvalidConfig("node name hashes to the broadcast id".into()));
        }
        config.liveness.validate().map_err(NodeError::InvalidConfig)?;
        config.reliable.validate().map_err(NodeError::InvalidConfig)?;
        let topics = TopicTable::from_configs(&config.topics)?;
        Ok(Node {
            id,
            name: config.name,
            liveness: config.liveness,
            reliable: config.reliable,
            peers: PeerTable::new(config.liveness),
            topics,
            queue: TransmitQueue::new(),
            transfers: BTreeMap::new(),
            reassembly: BTreeMap::new(),
            completed: BTreeMap::new(),
            in_flight_count: BTreeMap::new(),
            next_message_id: 0,
            next_heartbeat: Timestamp::ZERO,
            outbox: VecDeque::new(),
            events: VecDeque::new(),
            stats: NodeStats::default(),
        })
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn peers(&self) -> &PeerTable {
        &self.peers
    }

    pub fn stats(&self) -> &NodeStats {
        &self.stats
    }

    pub fn liveness_config(&self) -> &LivenessConfig {
        &self.liveness
    }

    pub fn reliable_config(&self) -> &ReliableConfig {
        &self.reliable
    }

    /// Next datagram for the medium, if any.
    pub fn poll_transmit(&mut self) -> Option<Outgoing> {
        self.outbox.pop_front()
    }

    /// Next upward notification, if any.
    pub fn poll_event(&mut self) -> Option<NodeEvent> {
        self.events.pop_front()
    }

    /// Transmitted-but-unacked fragments toward `dest` right now.
    pub fn in_flight(&self, dest: NodeId) -> usize {
        self.in_flight_count.get(&dest).copied().unwrap_or(0)
    }

    /// Per-destination in-flight counts (window-law instrumentation).
    pub fn in_flight_counts(&self) -> &BTreeMap<NodeId, usize> {
        &self.in_flight_count
    }

    /// Payload bytes queued or in flight toward `dest` (status output).
    pub fn queued_bytes(&self, dest: NodeId) -> u64 {
        let in_flight: u64 =
            self.transfers.range((dest, 0)..=(dest, u32::MAX)).map(|(_, tr)| tr.in_flight_bytes()).sum();
        self.queue.queued_bytes(dest) + in_flight
    }

    pub fn peer_snapshot(&self) -> Vec<PeerRecord> {
        self.peers.snapshot()
    }

    pub fn resolve(&self, name: &str) -> Option<(NodeId, SocketAddr)> {
        self.peers.resolve(name)
    }

    pub fn topics(&self) -> &TopicTable {
        &self.topics
    }

    /// Runtime priority change; future submissions on the topic use it,
    /// fragments already queued keep the priority they carried.
    pub fn set_topic_priority(&mut self, topic: &str, priority: u8) {
        self.topics.set_priority(topic, priority);
    }

    /// Swap in a new topic table. Queued fragments are untouched.
    pub fn reconfigure_topics(&mut self, configs: &[TopicConfig]) -> Result<(), TopicError> {
        self.topics.reconfigure(configs)
    }

    /// Route a payload according to the topic's configured mode. The
    /// payload bytes are never inspected, only copied.
    pub fn publish(
        &mut self,
        topic: &str,
        payload: &[u8],
        now: Timestamp,
    ) -> Result<PublishOutcome, NodeError> {
        let mode =
            self.topics.mode_of(topic).cloned().ok_or_else(|| NodeError::UnknownTopic(topic.to_owned()))?;
        let priority = self.topics.priority_of(topic);
        match mode {
            TopicMode::Reliable { dest } => {
                let message_id = self.submit(&dest, topic, payload, priority, now)?;
                Ok(PublishOutcome::Reliable { message_id })
            }
            TopicMode::Broadcast => {
                let outcome = self.broadcast(topic, payload, priority, now)?;
                Ok(PublishOutcome::Broadcast(outcome))
            }
        }
    }

    /// Publish with an explicit destination, overriding the topic's static
    /// destination (mode is forced to reliable).
    pub fn publish_to(
        &mut self,
        topic: &str,
        dest: &str,
        payload: &[u8],
        now: Timestamp,
    ) -> Result<u32, NodeError> {
        let priority = self.topics.priority_of(topic);
        self.submit(dest, topic, payload, priority, now)
    }

    /// Start a reliable transfer. Fragments are planned, handed to the
    /// scheduler, and released as window slots open.
    pub fn submit(
        &mut self,
        dest_name: &str,
        topic: &str,
        payload: &[u8],
        priority: u8,
        now: Timestamp,
    ) -> Result<u32, NodeError> {
        if topic.len() > MAX_NAME {
            return Err(NodeError::Wire(WireError::OversizeTopic));
        }
        let (dest, _) =
            self.peers.resolve(dest_name).ok_or_else(|| NodeError::UnknownPeer(dest_name.to_owned()))?;
        if !self.peers.is_online(dest) {
            self.stats.publishes_rejected += 1;
            return Err(NodeError::PeerOffline(dest_name.to_owned()));
        }
        self.submit_to_id(dest, topic, payload, priority, now)
    }

    fn submit_to_id(
        &mut self,
        dest: NodeId,
        topic: &str,
        payload: &[u8],
        priority: u8,
        now: Timestamp,
    ) -> Result<u32, NodeError> {
        if payload.len() > max_message_len(topic.len()) {
            return Err(NodeError::MessageTooLarge);
        }
        let message_id = self.next_message_id;
        self.next_message_id = self.next_message_id.wrapping_add(1);
        let transfer = OutboundTransfer::new(
            self.id,
            dest,
            message_id,
            priority,
            topic,
            payload,
            self.reliable.retransmit_initial,
            now,
        );
        for frag in &transfer.fragments {
            self.queue.enqueue(dest, message_id, frag.frag_index, priority, frag.payload.len() as u32);
        }
        self.transfers.insert((dest, message_id), transfer);
        self.pump(now);
        Ok(message_id)
    }

    /// Point-to-multipoint: one unacknowledged broadcast datagram if the
    /// message fits a single MTU, otherwise a reliable unicast fan-out to
    /// every peer currently Online.
    pub fn broadcast(
        &mut self,
        topic: &str,
        payload: &[u8],
        priority: u8,
        now: Timestamp,
    ) -> Result<BroadcastOutcome, NodeError> {
        if topic.len() > MAX_NAME {
            return Err(NodeError::Wire(WireError::OversizeTopic));
        }
        let (_, single) = broadcast_plan(payload.len(), topic.len());
        if single {
            let message_id = self.next_message_id;
            self.next_message_id = self.next_message_id.wrapping_add(1);
            let env = Envelope {
                kind: Kind::BcastData,
                source_id: self.id,
                dest_id: NodeId::BROADCAST,
                message_id,
                frag_index: 0,
                frag_count: 1,
                priority,
                topic: Some(topic.to_owned()),
                payload: payload.to_vec(),
            };
            let bytes = encode_envelope(&env)?;
            self.outbox.push_back(Outgoing { bytes, kind: Kind::BcastData, to: OutAddr::AllPeers });
            self.stats.bcast_sent += 1;
            self.stats.payload_bytes_sent += payload.len() as u64;
            Ok(BroadcastOutcome::SingleDatagram)
        } else {
            if payload.len() > max_message_len(topic.len()) {
                return Err(NodeError::MessageTooLarge);
            }
            // Peer set sampled once, at call time; Offline peers skipped.
            let targets = self.peers.online_ids();
            let mut ids = Vec::with_capacity(targets.len());
            for dest in targets {
                ids.push(self.submit_to_id(dest, topic, payload, priority, now)?);
            }
            Ok(BroadcastOutcome::FanOut(ids))
        }
    }

    /// Feed one received datagram into the engine.
    pub fn handle_datagram(&mut self, bytes: &[u8], from: SocketAddr, now: Timestamp) {
        let env = match decode_envelope(bytes) {
            Ok(env) => env,
            Err(_) => {
                self.stats.decode_drops += 1;
                return;
            }
        };
        if env.source_id == self.id {
            // Our own broadcast echoed back by the medium.
            self.stats.self_echoes += 1;
            return;
        }
        match env.kind {
            Kind::Heartbeat => {
                self.stats.heartbeats_received += 1;
                self.note_peer_event(&env, from, now);
            }
            Kind::Ack => {
                if env.dest_id != self.id {
                    self.stats.mismatched_dest += 1;
                    return;
                }
                self.stats.acks_received += 1;
                self.note_peer_event(&env, from, now);
                self.on_ack(&env, now);
            }
            Kind::Data => {
                if env.dest_id != self.id {
                    self.stats.mismatched_dest += 1;
                    return;
                }
                self.stats.data_received += 1;
                self.on_data(&env, from, now);
            }
            Kind::BcastData => {
                self.stats.bcast_received += 1;
                self.on_broadcast_data(&env, now);
            }
        }
        self.pump(now);
    }

    /// Timer entry point. Call every [`ReliableConfig::tick_interval`];
    /// heartbeat emission and the liveness sweep self-schedule inside.
    pub fn handle_timer(&mut self, now: Timestamp) {
        if now >= self.next_heartbeat {
            let env = Envelope::heartbeat(self.id, &self.name);
            let bytes = encode_envelope(&env).expect("validated name fits");
            self.outbox.push_back(Outgoing { bytes, kind: Kind::Heartbeat, to: OutAddr::AllPeers });
            self.stats.heartbeats_sent += 1;
            while self.next_heartbeat <= now {
                self.next_heartbeat += self.liveness.heartbeat_period;
            }
        }

        // Liveness sweep: peers silent past the timeout go Offline and
        // everything pending toward them is discarded.
        for id in self.peers.sweep(now) {
            self.peer_went_offline(id);
        }

        // Purge idle partial messages and mark their sources Offline.
        let timeout = self.reliable.reassembly_timeout;
        let expired: Vec<(NodeId, u32)> = self
            .reassembly
            .iter()
            .filter(|(_, buf)| now.since(buf.last_activity) > timeout)
            .map(|(&key, _)| key)
            .collect();
        for key in expired {
            self.reassembly.remove(&key);
            self.stats.reassemblies_purged += 1;
            self.events.push_back(NodeEvent::ReassemblyPurged { source: key.0, message_id: key.1 });
            if self.peers.force_offline(key.0) {
                self.peer_went_offline(key.0);
            }
        }

        // Requeue fragments whose retransmit deadline passed.
        let max_timeout = self.reliable.retransmit_max;
        let mut requeue: Vec<(NodeId, u32, u16, u8, u32)> = Vec::new();
        for (&(dest, message_id), transfer) in self.transfers.iter_mut() {
            for idx in transfer.take_expired(now, max_timeout) {
                let len = transfer.fragments[idx as usize].payload.len() as u32;
                requeue.push((dest, message_id, idx, transfer.priority, len));
                let slot = self.in_flight_count.entry(dest).or_insert(0);
                *slot = slot.saturating_sub(1);
            }
        }
        for (dest, message_id, idx, priority, len) in requeue {
            self.queue.enqueue(dest, message_id, idx, priority, len);
        }

        self.pump(now);
    }

    /// Abort every pending transfer toward a peer that just went Offline
    /// and drop its queued fragments.
    fn peer_went_offline(&mut self, id: NodeId) {
        let name = self.peers.name_of(id).unwrap_or_default().to_owned();
        self.events.push_back(NodeEvent::PeerOffline { id, name });
        self.queue.drop_dest(id);
        let keys: Vec<(NodeId, u32)> =
            self.transfers.range((id, 0)..=(id, u32::MAX)).map(|(&k, _)| k).collect();
        for key in keys {
            let transfer = self.transfers.remove(&key).expect("key just listed");
            let slot = self.in_flight_count.entry(id).or_insert(0);
            *slot = slot.saturating_sub(transfer.in_flight.len());
            self.stats.transfers_aborted += 1;
            self.events.push_back(NodeEvent::TransferAborted {
                dest: id,
                message_id: key.1,
                reason: AbortReason::PeerOffline,
            });
        }
    }

    fn note_peer_event(&mut self, env: &Envelope, from: SocketAddr, now: Timestamp) {
        match self.peers.observe(env, from, now) {
            Some(PeerEvent::Discovered) => {
                let name = self.peers.name_of(env.source_id).unwrap_or_default().to_owned();
                self.events.push_back(NodeEvent::PeerDiscovered { id: env.source_id, name });
            }
            Some(PeerEvent::CameOnline) => {
                let name = self.peers.name_of(env.source_id).unwrap_or_default().to_owned();
                self.events.push_back(NodeEvent::PeerOnline { id: env.source_id, name });
            }
            _ => {}
        }
    }

    fn on_ack(&mut self, env: &Envelope, now: Timestamp) {
        let key = (env.source_id, env.message_id);
        let Some(transfer) = self.transfers.get_mut(&key) else {
            // Stale ack after completion or abort.
            self.stats.stale_acks += 1;
            return;
        };
        let was_in_flight = transfer.in_flight.contains_key(&env.frag_index);
        match transfer.mark_acked(env.frag_index) {
            AckOutcome::Duplicate => {}
            outcome => {
                if was_in_flight {
                    let slot = self.in_flight_count.entry(env.source_id).or_insert(0);
                    *slot = slot.saturating_sub(1);
                }
                if outcome == AckOutcome::Complete {
                    let transfer = self.transfers.remove(&key).expect("present");
                    self.stats.transfers_completed += 1;
                    self.stats.payload_bytes_sent += transfer.payload_len as u64;
                    self.events.push_back(NodeEvent::TransferComplete {
                        dest: env.source_id,
                        message_id: env.message_id,
                    });
                }
            }
        }
        let _ = now;
    }

    fn on_data(&mut self, env: &Envelope, from: SocketAddr, now: Timestamp) {
        // Ack unconditionally, duplicates included: the sender may have
        // lost the first ack, and a silent receiver deadlocks its window.
        let ack = Envelope::ack(self.id, env.source_id, env.message_id, env.frag_index, env.frag_count);
        let bytes = encode_envelope(&ack).expect("ack always fits");
        self.outbox.push_back(Outgoing { bytes, kind: Kind::Ack, to: OutAddr::Unicast(from) });
        self.stats.acks_sent += 1;

        if self.completed.get(&env.source_id).is_some_and(|c| c.contains(env.message_id)) {
            // Late fragment of an already delivered message.
            self.stats.duplicate_fragments += 1;
            return;
        }

        let key = (env.source_id, env.message_id);
        let buf = self
            .reassembly
            .entry(key)
            .or_insert_with(|| ReassemblyBuffer::new(env.source_id, env.message_id, env.frag_count, now));
        if buf.frag_count != env.frag_count {
            // Same message id, different geometry: corrupt or confused
            // sender. Drop the fragment, keep the buffer.
            self.stats.decode_drops += 1;
            return;
        }
        if !buf.insert(env, now) {
            self.stats.duplicate_fragments += 1;
            return;
        }
        if buf.is_complete() {
            let buf = self.reassembly.remove(&key).expect("present");
            let (topic, payload) = buf.assemble();
            self.completed.entry(env.source_id).or_default().insert(env.message_id);
            self.deliver_upward(env.source_id, topic, payload, now);
        }
    }

    fn on_broadcast_data(&mut self, env: &Envelope, now: Timestamp) {
        // Single unacknowledged datagram: no ack, no dedup, delivered
        // through the identical path as a completed unicast message.
        let topic = env.topic.clone().unwrap_or_default();
        self.deliver_upward(env.source_id, topic, env.payload.clone(), now);
    }

    fn deliver_upward(&mut self, source: NodeId, topic: String, payload: Vec<u8>, now: Timestamp) {
        let source_name =
            self.peers.name_of(source).map(str::to_owned).unwrap_or_else(|| format!("id-{source}"));
        self.stats.messages_delivered += 1;
        self.stats.payload_bytes_delivered += payload.len() as u64;
        self.events.push_back(NodeEvent::Delivery(InboundDelivery {
            source_id: source,
            source_name,
            topic,
            payload,
            arrival_time: now,
        }));
    }

    /// Release eligible fragments from the scheduler into the outbox until
    /// every destination's window is full or nothing is queued.
    fn pump(&mut self, now: Timestamp) {
        loop {
            let peers = &self.peers;
            let counts = &self.in_flight_count;
            let window = self.reliable.window;
            let Some(frag) = self.queue.dequeue_eligible(|dest| {
                peers.is_online(dest) && counts.get(&dest).copied().unwrap_or(0) < window
            }) else {
                break;
            };
            let Some(transfer) = self.transfers.get_mut(&(frag.dest, frag.message_id)) else {
                continue; // transfer completed or aborted while queued
            };
            if transfer.is_acked(frag.frag_index) {
                continue; // retransmit queued, then the ack arrived
            }
            if transfer.in_flight.contains_key(&frag.frag_index) {
                continue;
            }
            let Some(peer) = self.peers.get(frag.dest) else {
                continue;
            };
            let addr = peer.addr;
            let env = &transfer.fragments[frag.frag_index as usize];
            let bytes = encode_envelope(env).expect("fragments are sized at submit");
            if transfer.mark_sent(frag.frag_index, now) {
                self.stats.retransmits += 1;
            }
            *self.in_flight_count.entry(frag.dest).or_insert(0) += 1;
            self.stats.data_sent += 1;
            self.outbox.push_back(Outgoing { bytes, kind: Kind::Data, to: OutAddr::Unicast(addr) });
        }
    }

    /// Abort everything in flight (shutdown path). Emits one
    /// `TransferAborted` per pending transfer.
    pub fn abort_all(&mut self) {
        let keys: Vec<(NodeId, u32)> = self.transfers.keys().copied().collect();
        for (dest, message_id) in keys {
            self.transfers.remove(&(dest, message_id));
            self.queue.drop_dest(dest);
            self.stats.transfers_aborted += 1;
            self.events.push_back(NodeEvent::TransferAborted {
                dest,
                message_id,
                reason: AbortReason::Shutdown,
            });
        }
        self.in_flight_count.clear();
    }
}
