//! Datagram envelope codec and fragmentation arithmetic.
//!
//! Every datagram on the wire is one [`Envelope`]: a fixed 30-byte header,
//! an optional topic name, and an opaque payload. The full byte layout is
//! documented in `WIRE.md`. Everything here is a pure function over byte
//! buffers; no sockets, no clocks, no shared state.

use std::fmt;
use std::ops::Range;

use thiserror::Error;

/// First two bytes of every datagram.
pub const MAGIC: [u8; 2] = [0x55, 0x4D]; // "UM"
/// Wire format version.
pub const VERSION: u8 = 1;
/// Largest datagram we will emit or accept.
pub const MAX_DATAGRAM: usize = 1500;
/// Fixed header length in bytes, through the topic-length byte.
pub const HEADER_LEN: usize = 30;
/// Longest topic or node name, in bytes.
pub const MAX_NAME: usize = 64;
/// Payload capacity of every fragment after the first.
pub const FRAGMENT_PAYLOAD: usize = 1400;

// The framing overhead budget: fixed header plus a maximal name stays
// within 100 bytes, and a full fragment always fits the MTU.
const _: () = assert!(HEADER_LEN + MAX_NAME <= 100);
const _: () = assert!(HEADER_LEN + MAX_NAME + FRAGMENT_PAYLOAD <= MAX_DATAGRAM);

/// A node's stable 64-bit identifier, derived from its name.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u64);

impl NodeId {
    /// Destination meaning "every reachable node".
    pub const BROADCAST: NodeId = NodeId(u64::MAX);

    /// Stable FNV-1a hash of the node name. The name stays the
    /// human-facing handle; the id is what travels on the wire.
    pub fn from_name(name: &str) -> NodeId {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for &b in name.as_bytes() {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        NodeId(hash)
    }

    pub fn is_broadcast(self) -> bool {
        self == NodeId::BROADCAST
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeId({:016x})", self.0)
    }
}

/// Datagram kind discriminator.
#[repr(u8)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Heartbeat = 1,
    Data = 2,
    Ack = 3,
    BcastData = 4,
}

impl TryFrom<u8> for Kind {
    type Error = WireError;

    fn try_from(v: u8) -> Result<Kind, WireError> {
        match v {
            1 => Ok(Kind::Heartbeat),
            2 => Ok(Kind::Data),
            3 => Ok(Kind::Ack),
            4 => Ok(Kind::BcastData),
            _ => Err(WireError::InconsistentLength),
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum WireError {
    /// Topic or node name longer than [`MAX_NAME`] bytes.
    #[error("topic or name longer than {MAX_NAME} bytes")]
    OversizeTopic,
    /// Encoding would exceed [`MAX_DATAGRAM`] bytes.
    #[error("encoded datagram would exceed {MAX_DATAGRAM} bytes")]
    OversizePayload,
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported wire version")]
    BadVersion,
    #[error("datagram truncated")]
    Truncated,
    /// Any field combination the format forbids. Receivers drop the
    /// datagram silently and count it.
    #[error("inconsistent length or field")]
    InconsistentLength,
}

/// One wire datagram.
///
/// `topic` is `Some` exactly on fragment 0 of `Data`/`BcastData` (it may be
/// empty); every other kind and fragment carries `None`. Heartbeats put the
/// sender's length-prefixed name in `payload` instead.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub kind: Kind,
    pub source_id: NodeId,
    pub dest_id: NodeId,
    pub message_id: u32,
    pub frag_index: u16,
    pub frag_count: u16,
    pub priority: u8,
    pub topic: Option<String>,
    pub payload: Vec<u8>,
}

impl Envelope {
    /// Discovery announcement: broadcast, name in the payload.
    pub fn heartbeat(source_id: NodeId, name: &str) -> Envelope {
        assert!(name.len() <= MAX_NAME, "node name validated at config time");
        let mut payload = Vec::with_capacity(1 + name.len());
        payload.push(name.len() as u8);
        payload.extend_from_slice(name.as_bytes());
        Envelope {
            kind: Kind::Heartbeat,
            source_id,
            dest_id: NodeId::BROADCAST,
            message_id: 0,
            frag_index: 0,
            frag_count: 1,
            priority: 0,
            topic: None,
            payload,
        }
    }

    /// Acknowledgment for one received fragment.
    pub fn ack(
        source_id: NodeId,
        dest_id: NodeId,
        message_id: u32,
        frag_index: u16,
        frag_count: u16,
    ) -> Envelope {
        Envelope {
            kind: Kind::Ack,
            source_id,
            dest_id,
            message_id,
            frag_index,
            frag_count,
            priority: 0,
            topic: None,
            payload: Vec::new(),
        }
    }

    /// The advertised name inside a heartbeat payload, if well formed.
    pub fn heartbeat_name(&self) -> Option<&str> {
        if self.kind != Kind::Heartbeat {
            return None;
        }
        let (&len, rest) = self.payload.split_first()?;
        if rest.len() != len as usize {
            return None;
        }
        std::str::from_utf8(rest).ok()
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.topic.as_ref().map_or(0, String::len) + self.payload.len()
    }
}

/// Serialize an envelope into its wire bytes (network byte order).
pub fn encode_envelope(env: &Envelope) -> Result<Vec<u8>, WireError> {
    let topic_len = env.topic.as_ref().map_or(0, String::len);
    if topic_len > MAX_NAME {
        return Err(WireError::OversizeTopic);
    }
    debug_assert!(env.frag_count >= 1 && env.frag_index < env.frag_count);
    debug_assert!(
        env.topic.is_none() || (matches!(env.kind, Kind::Data | Kind::BcastData) && env.frag_index == 0),
        "topic travels only in fragment 0 of data kinds"
    );
    debug_assert!(env.kind != Kind::Ack || env.payload.is_empty());

    let total = HEADER_LEN + topic_len + env.payload.len();
    if total > MAX_DATAGRAM {
        return Err(WireError::OversizePayload);
    }

    let mut buf = Vec::with_capacity(total);
    buf.extend_from_slice(&MAGIC);
    buf.push(VERSION);
    buf.push(env.kind as u8);
    buf.extend_from_slice(&env.source_id.0.to_be_bytes());
    buf.extend_from_slice(&env.dest_id.0.to_be_bytes());
    buf.extend_from_slice(&env.message_id.to_be_bytes());
    buf.extend_from_slice(&env.frag_index.to_be_bytes());
    buf.extend_from_slice(&env.frag_count.to_be_bytes());
    buf.push(env.priority);
    buf.push(topic_len as u8);
    if let Some(topic) = &env.topic {
        buf.extend_from_slice(topic.as_bytes());
    }
    buf.extend_from_slice(&env.payload);
    Ok(buf)
}

/// Parse wire bytes back into an [`Envelope`].
///
/// Accepts arbitrary input; every failure means "drop the datagram and
/// count it", never a crash.
pub fn decode_envelope(bytes: &[u8]) -> Result<Envelope, WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(WireError::Truncated);
    }
    if bytes[0..2] != MAGIC {
        return Err(WireError::BadMagic);
    }
    if bytes[2] != VERSION {
        return Err(WireError::BadVersion);
    }
    if bytes.len() > MAX_DATAGRAM {
        return Err(WireError::InconsistentLength);
    }
    let kind = Kind::try_from(bytes[3])?;
    let source_id = NodeId(u64::from_be_bytes(bytes[4..12].try_into().unwrap()));
    let dest_id = NodeId(u64::from_be_bytes(bytes[12..20].try_into().unwrap()));
    let message_id = u32::from_be_bytes(bytes[20..24].try_into().unwrap());
    let frag_index = u16::from_be_bytes(bytes[24..26].try_into().unwrap());
    let frag_count = u16::from_be_bytes(bytes[26..28].try_into().unwrap());
    let priority = bytes[28];
    let topic_len = bytes[29] as usize;

    if frag_count == 0 || frag_index >= frag_count {
        return Err(WireError::InconsistentLength);
    }
    if topic_len > MAX_NAME {
        return Err(WireError::InconsistentLength);
    }
    if HEADER_LEN + topic_len > bytes.len() {
        return Err(WireError::Truncated);
    }

    let topic_bytes = &bytes[HEADER_LEN..HEADER_LEN + topic_len];
    let payload = bytes[HEADER_LEN + topic_len..].to_vec();

    let topic = match kind {
        Kind::Data | Kind::BcastData if frag_index == 0 => {
            let s = std::str::from_utf8(topic_bytes).map_err(|_| WireError::InconsistentLength)?;
            Some(s.to_owned())
        }
        _ if topic_len != 0 => return Err(WireError::InconsistentLength),
        _ => None,
    };

    match kind {
        Kind::Heartbeat => {
            if !dest_id.is_broadcast() {
                return Err(WireError::InconsistentLength);
            }
            let Some((&len, rest)) = payload.split_first() else {
                return Err(WireError::Truncated);
            };
            if len as usize != rest.len() || len == 0 || len as usize > MAX_NAME {
                return Err(WireError::InconsistentLength);
            }
            if std::str::from_utf8(rest).is_err() {
                return Err(WireError::InconsistentLength);
            }
        }
        Kind::Ack => {
            if !payload.is_empty() {
                return Err(WireError::InconsistentLength);
            }
        }
        Kind::BcastData => {
            // Broadcast data always fits one datagram; larger messages fan
            // out as unicast transfers.
            if frag_count != 1 {
                return Err(WireError::InconsistentLength);
            }
        }
        Kind::Data => {}
    }

    Ok(Envelope { kind, source_id, dest_id, message_id, frag_index, frag_count, priority, topic, payload })
}

/// How one payload splits into MTU-sized fragments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentPlan {
    pub total_len: usize,
    /// Contiguous, ordered byte ranges of the original payload, one per
    /// fragment. Every non-final fragment is filled to capacity.
    pub ranges: Vec<Range<usize>>,
}

impl FragmentPlan {
    pub fn frag_count(&self) -> usize {
        self.ranges.len()
    }
}

/// Payload capacity of fragment 0, which also carries the topic name.
pub fn first_fragment_capacity(topic_len: usize) -> usize {
    FRAGMENT_PAYLOAD - topic_len
}

/// Largest message a single transfer can carry for a given topic length
/// (fragment indices are 16-bit).
pub fn max_message_len(topic_len: usize) -> usize {
    first_fragment_capacity(topic_len) + (usize::from(u16::MAX) - 1) * FRAGMENT_PAYLOAD
}

/// Split `payload_len` bytes into fragment ranges.
///
/// Fragment 0 gives up `topic_len` bytes of its capacity to the topic name;
/// later fragments carry the full [`FRAGMENT_PAYLOAD`]. An empty payload
/// still produces one (empty) fragment so the topic gets announced.
pub fn plan_fragments(payload_len: usize, topic_len: usize) -> FragmentPlan {
    assert!(topic_len <= MAX_NAME);
    assert!(payload_len <= max_message_len(topic_len), "message too large to fragment");

    let first = first_fragment_capacity(topic_len);
    let mut ranges = Vec::new();
    if payload_len <= first {
        ranges.push(0..payload_len);
    } else {
        ranges.push(0..first);
        let mut offset = first;
        while offset < payload_len {
            let end = (offset + FRAGMENT_PAYLOAD).min(payload_len);
            ranges.push(offset..end);
            offset = end;
        }
    }
    FragmentPlan { total_len: payload_len, ranges }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent accumulation oracle: pour bytes into fragments one
    /// capacity at a time and count how many it takes.
    fn oracle_frag_count(payload_len: usize, topic_len: usize) -> usize {
        let mut remaining = payload_len;
        let mut capacity = first_fragment_capacity(topic_len);
        let mut count = 0;
        loop {
            count += 1;
            remaining = remaining.saturating_sub(capacity);
            if remaining == 0 {
                break;
            }
            capacity = FRAGMENT_PAYLOAD;
        }
        count
    }

    #[test]
    fn encoded_sizes_stay_inside_budgets() {
        // Fragment 0 with a maximal topic, filled to capacity.
        let topic = "t".repeat(MAX_NAME);
        let env = Envelope {
            kind: Kind::Data,
            source_id: NodeId(1),
            dest_id: NodeId(2),
            message_id: 0,
            frag_index: 0,
            frag_count: 2,
            priority: 0,
            topic: Some(topic),
            payload: vec![0; first_fragment_capacity(MAX_NAME)],
        };
        let bytes = encode_envelope(&env).unwrap();
        assert!(bytes.len() <= MAX_DATAGRAM);
        assert!(bytes.len() - env.payload.len() <= 100, "framing overhead within budget");
    }

    #[test]
    fn heartbeat_round_trip() {
        let env = Envelope::heartbeat(NodeId::from_name("d01"), "d01");
        let bytes = encode_envelope(&env).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 1 + 3);
        let back = decode_envelope(&bytes).unwrap();
        assert_eq!(back, env);
        assert_eq!(back.heartbeat_name(), Some("d01"));
    }

    #[test]
    fn data_fragment_zero_fits_mtu() {
        let env = Envelope {
            kind: Kind::Data,
            source_id: NodeId::from_name("a"),
            dest_id: NodeId::from_name("b"),
            message_id: 1,
            frag_index: 0,
            frag_count: 2,
            priority: 10,
            topic: Some("telemetry".into()),
            payload: vec![0xAB; 1336],
        };
        let bytes = encode_envelope(&env).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 9 + 1336);
        assert!(bytes.len() <= MAX_DATAGRAM);
        assert_eq!(decode_envelope(&bytes).unwrap(), env);
    }

    #[test]
    fn ack_has_empty_payload() {
        let env = Envelope::ack(NodeId(1), NodeId(2), 9, 2, 5);
        let bytes = encode_envelope(&env).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        let back = decode_envelope(&bytes).unwrap();
        assert!(back.payload.is_empty());
        assert_eq!((back.message_id, back.frag_index), (9, 2));
    }

    #[test]
    fn decode_rejects_garbage() {
        assert_eq!(decode_envelope(&[]), Err(WireError::Truncated));
        assert_eq!(decode_envelope(&[0u8; 10]), Err(WireError::Truncated));

        let env = Envelope::heartbeat(NodeId::from_name("x"), "x");
        let mut bytes = encode_envelope(&env).unwrap();
        bytes[0] ^= 0xFF;
        assert_eq!(decode_envelope(&bytes), Err(WireError::BadMagic));

        let mut bytes = encode_envelope(&env).unwrap();
        bytes[2] = 99;
        assert_eq!(decode_envelope(&bytes), Err(WireError::BadVersion));

        // kind byte outside the enum
        let mut bytes = encode_envelope(&env).unwrap();
        bytes[3] = 0;
        assert_eq!(decode_envelope(&bytes), Err(WireError::InconsistentLength));

        // topic length running past the end of the datagram
        let mut bytes = encode_envelope(&env).unwrap();
        bytes[29] = 60;
        assert_eq!(decode_envelope(&bytes), Err(WireError::Truncated));
    }

    #[test]
    fn oversize_errors() {
        let long_topic = "t".repeat(MAX_NAME + 1);
        let env = Envelope {
            kind: Kind::Data,
            source_id: NodeId(1),
            dest_id: NodeId(2),
            message_id: 0,
            frag_index: 0,
            frag_count: 1,
            priority: 0,
            topic: Some(long_topic),
            payload: vec![],
        };
        assert_eq!(encode_envelope(&env), Err(WireError::OversizeTopic));

        let env = Envelope {
            kind: Kind::Data,
            source_id: NodeId(1),
            dest_id: NodeId(2),
            message_id: 0,
            frag_index: 0,
            frag_count: 1,
            priority: 0,
            topic: Some(String::new()),
            payload: vec![0; MAX_DATAGRAM],
        };
        assert_eq!(encode_envelope(&env), Err(WireError::OversizePayload));
    }

    #[test]
    fn plan_single_fragment_cases() {
        let plan = plan_fragments(FRAGMENT_PAYLOAD, 0);
        assert_eq!(plan.frag_count(), 1);
        assert_eq!(plan.ranges[0], 0..1400);

        let plan = plan_fragments(0, 8);
        assert_eq!(plan.frag_count(), 1);
        assert_eq!(plan.ranges[0], 0..0);

        // One byte past fragment 0's capacity spills into a second fragment.
        let plan = plan_fragments(FRAGMENT_PAYLOAD + 1, 0);
        assert_eq!(plan.frag_count(), 2);
        assert_eq!(plan.ranges[1], 1400..1401);
    }

    #[test]
    fn plan_matches_accumulation_oracle() {
        let mut rng_state = 0x1234_5678_u64;
        let mut next = |bound: usize| {
            // xorshift; plenty for test-case generation
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state as usize) % bound
        };
        for _ in 0..10_000 {
            let payload_len = next(10 * 1024 * 1024 + 1);
            let topic_len = next(MAX_NAME + 1);
            let plan = plan_fragments(payload_len, topic_len);
            assert_eq!(plan.frag_count(), oracle_frag_count(payload_len, topic_len));

            // Ranges are contiguous, ordered, and cover the payload.
            let mut cursor = 0;
            for (i, r) in plan.ranges.iter().enumerate() {
                assert_eq!(r.start, cursor);
                cursor = r.end;
                let cap = if i == 0 { first_fragment_capacity(topic_len) } else { FRAGMENT_PAYLOAD };
                if i + 1 < plan.frag_count() {
                    assert_eq!(r.len(), cap, "non-final fragment filled to capacity");
                } else {
                    assert!(r.len() <= cap);
                }
            }
            assert_eq!(cursor, payload_len);
        }
    }

    #[test]
    fn plan_is_monotone_in_payload_len() {
        for topic_len in [0, 8, MAX_NAME] {
            let mut prev = 0;
            for payload_len in (0..200_000).step_by(997) {
                let count = plan_fragments(payload_len, topic_len).frag_count();
                assert!(count >= prev);
                prev = count;
            }
        }
    }

    fn arb_name() -> impl Strategy<Value = String> {
        proptest::string::string_regex("[a-z0-9_/]{1,64}").unwrap()
    }

    fn arb_envelope() -> impl Strategy<Value = Envelope> {
        prop_oneof![
            // Heartbeat
            arb_name().prop_map(|n| Envelope::heartbeat(NodeId::from_name(&n), &n)),
            // Ack
            (any::<u64>(), any::<u64>(), any::<u32>(), 1u16..100).prop_flat_map(|(s, d, m, fc)| {
                (0..fc).prop_map(move |fi| Envelope::ack(NodeId(s), NodeId(d), m, fi, fc))
            }),
            // Data / BcastData
            (
                any::<u64>(),
                any::<u64>(),
                any::<u32>(),
                1u16..50,
                0u8..=255,
                arb_name(),
                proptest::collection::vec(any::<u8>(), 0..FRAGMENT_PAYLOAD),
                any::<bool>(),
            )
                .prop_flat_map(|(s, d, m, fc, prio, topic, payload, bcast)| {
                    let fc = if bcast { 1 } else { fc };
                    (0..fc).prop_map(move |fi| Envelope {
                        kind: if bcast { Kind::BcastData } else { Kind::Data },
                        source_id: NodeId(s),
                        dest_id: if bcast { NodeId::BROADCAST } else { NodeId(d) },
                        message_id: m,
                        frag_index: fi,
                        frag_count: fc,
                        priority: prio,
                        topic: if fi == 0 { Some(topic.clone()) } else { None },
                        payload: {
                            let cap =
                                if fi == 0 { first_fragment_capacity(topic.len()) } else { FRAGMENT_PAYLOAD };
                            let mut p = payload.clone();
                            p.truncate(cap);
                            p
                        },
                    })
                }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn round_trip_identity(env in arb_envelope()) {
            let bytes = encode_envelope(&env).unwrap();
            prop_assert!(bytes.len() <= MAX_DATAGRAM);
            // Framing overhead stays within the 100-byte budget for every kind.
            prop_assert!(bytes.len() - env.payload.len() <= 100);
            let back = decode_envelope(&bytes).unwrap();
            prop_assert_eq!(back, env);
        }

        #[test]
        fn fragment_ranges_reconstruct_payload(
            payload in proptest::collection::vec(any::<u8>(), 0..20_000),
            topic_len in 0usize..=MAX_NAME,
        ) {
            let plan = plan_fragments(payload.len(), topic_len);
            let mut rebuilt = Vec::with_capacity(payload.len());
            for r in &plan.ranges {
                rebuilt.extend_from_slice(&payload[r.clone()]);
            }
            prop_assert_eq!(rebuilt, payload);
        }
    }
}
