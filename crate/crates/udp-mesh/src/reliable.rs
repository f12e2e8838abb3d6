//! Reliable point-to-point transfer state.
//!
//! One [`OutboundTransfer`] tracks a submitted message on the sending side:
//! its prepared fragments, which are acked, which are in flight and when
//! each retransmit fires. One [`ReassemblyBuffer`] holds a partially
//! received message until all fragments arrive or it idles out. The engine
//! in [`crate::node`] owns both and wires them to the scheduler and peer
//! table; nothing here touches a socket.

use std::collections::BTreeMap;
use std::time::Duration;

use crate::time::Timestamp;
use crate::wire::{plan_fragments, Envelope, Kind, NodeId};

/// Windowing and timer knobs for the reliable channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReliableConfig {
    /// Fragments permitted in flight per destination pair.
    pub window: usize,
    /// First retransmit deadline after a transmission.
    pub retransmit_initial: Duration,
    /// Ceiling for the doubled retransmit deadline.
    pub retransmit_max: Duration,
    /// Idle time after which a partial inbound message is purged and its
    /// source marked Offline.
    pub reassembly_timeout: Duration,
}

impl Default for ReliableConfig {
    fn default() -> Self {
        ReliableConfig {
            window: 3,
            retransmit_initial: Duration::from_millis(200),
            retransmit_max: Duration::from_millis(3_200),
            reassembly_timeout: Duration::from_secs(10),
        }
    }
}

impl ReliableConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.window < 1 {
            return Err("reliable.window must be at least 1".into());
        }
        if self.retransmit_initial > self.retransmit_max {
            return Err("reliable.retransmit_initial must not exceed retransmit_max".into());
        }
        if self.retransmit_initial.is_zero() {
            return Err("reliable.retransmit_initial must be positive".into());
        }
        Ok(())
    }

    /// Cadence at which the host should call the engine's timer entry point.
    pub fn tick_interval(&self) -> Duration {
        self.retransmit_initial / 4
    }
}

/// Per-fragment in-flight bookkeeping.
#[derive(Debug, Clone, Copy)]
pub struct InFlight {
    pub deadline: Timestamp,
    /// The timeout that produced `deadline`; doubles on expiry.
    pub timeout: Duration,
}

/// What an ack did to a transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckOutcome {
    /// Fragment was already acked; nothing changed.
    Duplicate,
    Progress,
    /// Every fragment is now acked.
    Complete,
}

/// Sending side of one reliable message.
#[derive(Debug)]
pub struct OutboundTransfer {
    pub dest: NodeId,
    pub message_id: u32,
    pub priority: u8,
    pub topic: String,
    pub fragments: Vec<Envelope>,
    acked: Vec<bool>,
    acked_count: usize,
    /// frag_index → retransmit deadline for transmitted, unacked fragments.
    pub in_flight: BTreeMap<u16, InFlight>,
    /// Current retransmit timeout per fragment; doubles on each expiry.
    timeouts: Vec<Duration>,
    sends: Vec<u32>,
    pub payload_len: usize,
    pub created: Timestamp,
    pub retransmits: u64,
}

impl OutboundTransfer {
    /// Plan the fragmentation and prepare every fragment envelope.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        source: NodeId,
        dest: NodeId,
        message_id: u32,
        priority: u8,
        topic: &str,
        payload: &[u8],
        initial_timeout: Duration,
        now: Timestamp,
    ) -> OutboundTransfer {
        let plan = plan_fragments(payload.len(), topic.len());
        let frag_count = plan.frag_count() as u16;
        let fragments = plan
            .ranges
            .iter()
            .enumerate()
            .map(|(i, range)| Envelope {
                kind: Kind::Data,
                source_id: source,
                dest_id: dest,
                message_id,
                frag_index: i as u16,
                frag_count,
                priority,
                topic: (i == 0).then(|| topic.to_owned()),
                payload: payload[range.clone()].to_vec(),
            })
            .collect::<Vec<_>>();
        let n = fragments.len();
        OutboundTransfer {
            dest,
            message_id,
            priority,
            topic: topic.to_owned(),
            fragments,
            acked: vec![false; n],
            acked_count: 0,
            in_flight: BTreeMap::new(),
            timeouts: vec![initial_timeout; n],
            sends: vec![0; n],
            payload_len: payload.len(),
            created: now,
            retransmits: 0,
        }
    }

    pub fn frag_count(&self) -> usize {
        self.fragments.len()
    }

    pub fn is_acked(&self, frag_index: u16) -> bool {
        self.acked.get(frag_index as usize).copied().unwrap_or(true)
    }

    pub fn is_complete(&self) -> bool {
        self.acked_count == self.fragments.len()
    }

    /// Record one transmission: the fragment enters the in-flight set with
    /// its current timeout. Returns true if this was a retransmission.
    pub fn mark_sent(&mut self, frag_index: u16, now: Timestamp) -> bool {
        let idx = frag_index as usize;
        let timeout = self.timeouts[idx];
        self.in_flight.insert(frag_index, InFlight { deadline: now + timeout, timeout });
        self.sends[idx] += 1;
        let retransmit = self.sends[idx] > 1;
        if retransmit {
            self.retransmits += 1;
        }
        retransmit
    }

    /// Apply an ack. Acked fragments leave the in-flight set and never
    /// return; duplicate acks are idempotent.
    pub fn mark_acked(&mut self, frag_index: u16) -> AckOutcome {
        let idx = frag_index as usize;
        if idx >= self.acked.len() || self.acked[idx] {
            return AckOutcome::Duplicate;
        }
        self.acked[idx] = true;
        self.acked_count += 1;
        self.in_flight.remove(&frag_index);
        if self.is_complete() {
            AckOutcome::Complete
        } else {
            AckOutcome::Progress
        }
    }

    /// Pull fragments whose retransmit deadline passed out of the in-flight
    /// set, doubling their timeout (capped). The caller re-enqueues them.
    pub fn take_expired(&mut self, now: Timestamp, max_timeout: Duration) -> Vec<u16> {
        let expired: Vec<u16> =
            self.in_flight.iter().filter(|(_, f)| f.deadline <= now).map(|(&i, _)| i).collect();
        for &idx in &expired {
            self.in_flight.remove(&idx);
            let t = &mut self.timeouts[idx as usize];
            *t = (*t * 2).min(max_timeout);
        }
        expired
    }

    /// Payload bytes transmitted and not yet acked.
    pub fn in_flight_bytes(&self) -> u64 {
        self.in_flight.keys().map(|&i| self.fragments[i as usize].payload.len() as u64).sum()
    }
}

/// Receiving side of one partially reassembled message.
#[derive(Debug)]
pub struct ReassemblyBuffer {
    pub source: NodeId,
    pub message_id: u32,
    pub frag_count: u16,
    received: BTreeMap<u16, Vec<u8>>,
    /// Topic name from fragment 0; absent until that fragment arrives.
    pub topic: Option<String>,
    pub last_activity: Timestamp,
}

impl ReassemblyBuffer {
    pub fn new(source: NodeId, message_id: u32, frag_count: u16, now: Timestamp) -> ReassemblyBuffer {
        ReassemblyBuffer {
            source,
            message_id,
            frag_count,
            received: BTreeMap::new(),
            topic: None,
            last_activity: now,
        }
    }

    /// Store one fragment. Duplicates refresh activity but change nothing
    /// else; returns false for them.
    pub fn insert(&mut self, env: &Envelope, now: Timestamp) -> bool {
        self.last_activity = now;
        if self.received.contains_key(&env.frag_index) {
            return false;
        }
        if env.frag_index == 0 {
            self.topic = env.topic.clone();
        }
        self.received.insert(env.frag_index, env.payload.clone());
        true
    }

    pub fn is_complete(&self) -> bool {
        self.received.len() == usize::from(self.frag_count)
    }

    /// Concatenate fragments in index order. Only valid once complete.
    pub fn assemble(self) -> (String, Vec<u8>) {
        debug_assert!(self.is_complete());
        let mut payload = Vec::with_capacity(self.received.values().map(Vec::len).sum());
        for (_, bytes) in self.received {
            payload.extend_from_slice(&bytes);
        }
        (self.topic.unwrap_or_default(), payload)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::plan_fragments;

    fn transfer(payload_len: usize) -> OutboundTransfer {
        let payload: Vec<u8> = (0..payload_len).map(|i| i as u8).collect();
        OutboundTransfer::new(
            NodeId(1),
            NodeId(2),
            7,
            10,
            "t",
            &payload,
            Duration::from_millis(200),
            Timestamp::ZERO,
        )
    }

    #[test]
    fn fragments_cover_payload_in_order() {
        let tr = transfer(4200);
        assert_eq!(tr.frag_count(), plan_fragments(4200, 1).frag_count());
        let mut rebuilt = Vec::new();
        for (i, frag) in tr.fragments.iter().enumerate() {
            assert_eq!(frag.frag_index as usize, i);
            assert_eq!(frag.topic.is_some(), i == 0);
            rebuilt.extend_from_slice(&frag.payload);
        }
        let expected: Vec<u8> = (0..4200).map(|i| i as u8).collect();
        assert_eq!(rebuilt, expected);
    }

    #[test]
    fn ack_lifecycle() {
        let mut tr = transfer(3000); // 3 fragments
        assert_eq!(tr.frag_count(), 3);
        tr.mark_sent(0, Timestamp::ZERO);
        tr.mark_sent(1, Timestamp::ZERO);
        assert_eq!(tr.in_flight.len(), 2);

        assert_eq!(tr.mark_acked(0), AckOutcome::Progress);
        assert_eq!(tr.mark_acked(0), AckOutcome::Duplicate);
        assert_eq!(tr.in_flight.len(), 1);
        assert_eq!(tr.mark_acked(1), AckOutcome::Progress);
        assert_eq!(tr.mark_acked(2), AckOutcome::Complete);
        assert!(tr.is_complete());
    }

    #[test]
    fn expiry_doubles_timeout_up_to_cap() {
        let mut tr = transfer(100);
        let max = Duration::from_millis(3_200);
        let mut now = Timestamp::ZERO;
        let mut expected = Duration::from_millis(200);
        for _ in 0..6 {
            tr.mark_sent(0, now);
            let deadline = tr.in_flight[&0].deadline;
            assert_eq!(deadline, now + expected);
            now = deadline;
            let expired = tr.take_expired(now, max);
            assert_eq!(expired, vec![0]);
            expected = (expected * 2).min(max);
        }
        assert_eq!(tr.timeouts[0], max);
    }

    #[test]
    fn expiry_ignores_acked_and_future() {
        let mut tr = transfer(3000);
        tr.mark_sent(0, Timestamp::ZERO);
        tr.mark_sent(1, Timestamp::ZERO);
        tr.mark_acked(0);
        // Nothing expires before the deadline.
        assert!(tr.take_expired(Timestamp::from_millis(100), Duration::from_secs(4)).is_empty());
        // Only the unacked in-flight fragment expires.
        assert_eq!(tr.take_expired(Timestamp::from_millis(200), Duration::from_secs(4)), vec![1]);
    }

    #[test]
    fn reassembly_out_of_order_and_duplicates() {
        let payload: Vec<u8> = (0..3000u32).map(|i| (i % 251) as u8).collect();
        let tr = OutboundTransfer::new(
            NodeId(1),
            NodeId(2),
            5,
            0,
            "m",
            &payload,
            Duration::from_millis(200),
            Timestamp::ZERO,
        );

        let mut buf = ReassemblyBuffer::new(NodeId(1), 5, tr.frag_count() as u16, Timestamp::ZERO);
        for idx in [2u16, 0, 1] {
            assert!(buf.insert(&tr.fragments[idx as usize], Timestamp::from_millis(u64::from(idx))));
        }
        assert!(!buf.insert(&tr.fragments[1], Timestamp::from_millis(9)), "duplicate is a no-op");
        assert_eq!(buf.last_activity, Timestamp::from_millis(9), "duplicates still refresh activity");
        assert!(buf.is_complete());
        let (topic, assembled) = buf.assemble();
        assert_eq!(topic, "m");
        assert_eq!(assembled, payload);
    }
}
