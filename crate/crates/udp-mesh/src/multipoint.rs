//! Point-to-multipoint delivery policy.
//!
//! A message that fits one datagram goes out as a single unacknowledged
//! broadcast; anything larger fans out as ordinary reliable unicast
//! transfers to every peer currently Online. Receivers cannot tell the two
//! paths apart: both surface the same delivery record.

use crate::wire::{plan_fragments, FragmentPlan};

/// How a broadcast left the node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BroadcastOutcome {
    /// One unacknowledged broadcast datagram; no retransmits, no acks.
    SingleDatagram,
    /// One reliable unicast transfer per Online peer, with the same
    /// accounting and acknowledgments as point-to-point. Empty when no
    /// peer was Online at call time.
    FanOut(Vec<u32>),
}

/// Transmission path for a broadcast payload: single datagram iff the
/// whole message fits fragment 0.
pub fn broadcast_plan(payload_len: usize, topic_len: usize) -> (FragmentPlan, bool) {
    let plan = plan_fragments(payload_len, topic_len);
    let single = plan.frag_count() == 1;
    (plan, single)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::first_fragment_capacity;

    #[test]
    fn boundary_between_paths() {
        let topic = "estop";
        let cap = first_fragment_capacity(topic.len());
        assert!(broadcast_plan(cap, topic.len()).1);
        assert!(!broadcast_plan(cap + 1, topic.len()).1);
        assert!(broadcast_plan(0, topic.len()).1);
    }
}
