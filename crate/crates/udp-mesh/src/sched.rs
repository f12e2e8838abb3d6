//! The single prioritized transmit channel.
//!
//! Every pending fragment across all topics and destinations sits in one
//! queue ordered by `(priority, enqueue_seq)` — priority ascending with 0
//! highest, FIFO within a priority. Dequeueing is gated by per-destination
//! window availability: a fragment whose destination has no free in-flight
//! slot (or is Offline) is skipped in place, never reordered.

use std::collections::BTreeMap;

use crate::wire::NodeId;

/// Default priority for topics that never had one configured.
pub const DEFAULT_PRIORITY: u8 = 128;

/// Reference to one transmittable fragment. The fragment bytes live with
/// the owning transfer; the queue orders these lightweight handles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueuedFragment {
    pub dest: NodeId,
    pub message_id: u32,
    pub frag_index: u16,
    pub priority: u8,
    pub enqueue_seq: u64,
    pub payload_len: u32,
}

#[derive(Debug, Default)]
struct DestQueue {
    by_key: BTreeMap<(u8, u64), QueuedFragment>,
    bytes: u64,
}

/// Priority-ordered fragment queue with per-destination window gating.
#[derive(Debug, Default)]
pub struct TransmitQueue {
    per_dest: BTreeMap<NodeId, DestQueue>,
    next_seq: u64,
    len: usize,
}

impl TransmitQueue {
    pub fn new() -> TransmitQueue {
        TransmitQueue::default()
    }

    /// Insert a fragment. Retransmits come back through here and get a
    /// fresh sequence number while keeping their original priority.
    pub fn enqueue(
        &mut self,
        dest: NodeId,
        message_id: u32,
        frag_index: u16,
        priority: u8,
        payload_len: u32,
    ) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        let frag = QueuedFragment { dest, message_id, frag_index, priority, enqueue_seq: seq, payload_len };
        let dq = self.per_dest.entry(dest).or_default();
        dq.by_key.insert((priority, seq), frag);
        dq.bytes += u64::from(payload_len);
        self.len += 1;
        seq
    }

    /// Remove and return the least-`(priority, enqueue_seq)` fragment whose
    /// destination the caller deems eligible (free window slot and Online).
    /// Ineligible destinations keep their fragments in order.
    pub fn dequeue_eligible<F>(&mut self, eligible: F) -> Option<QueuedFragment>
    where
        F: Fn(NodeId) -> bool,
    {
        let mut best: Option<(u8, u64, NodeId)> = None;
        for (&dest, dq) in &self.per_dest {
            if dq.by_key.is_empty() || !eligible(dest) {
                continue;
            }
            let (&(prio, seq), _) = dq.by_key.first_key_value().expect("non-empty");
            if best.is_none_or(|(bp, bs, _)| (prio, seq) < (bp, bs)) {
                best = Some((prio, seq, dest));
            }
        }
        let (prio, seq, dest) = best?;
        let dq = self.per_dest.get_mut(&dest).expect("winner exists");
        let frag = dq.by_key.remove(&(prio, seq)).expect("winner exists");
        dq.bytes -= u64::from(frag.payload_len);
        self.len -= 1;
        Some(frag)
    }

    /// Drop every queued fragment for a destination (peer went Offline and
    /// its transfers abort). Returns the dropped fragments.
    pub fn drop_dest(&mut self, dest: NodeId) -> Vec<QueuedFragment> {
        match self.per_dest.remove(&dest) {
            None => Vec::new(),
            Some(dq) => {
                self.len -= dq.by_key.len();
                dq.by_key.into_values().collect()
            }
        }
    }

    /// Payload bytes currently queued toward one destination.
    pub fn queued_bytes(&self, dest: NodeId) -> u64 {
        self.per_dest.get(&dest).map_or(0, |dq| dq.bytes)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}
