//! Payload throughput measurement between two live daemons.
//!
//! Streams a byte volume over one reliable topic and measures payload
//! throughput (payload bytes only; framing and acks excluded) from first
//! submission to last completed transfer. A bounded number of messages is
//! kept outstanding so memory stays flat regardless of the total volume.

use std::fmt;
use std::time::{Duration, Instant};

use crate::daemon::{DaemonError, MeshNode};
use crate::node::{AbortReason, NodeEvent};
use crate::simnet::make_payload;

/// Messages kept outstanding at once.
const PIPELINE: usize = 8;

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub requested_bytes: u64,
    pub payload_size: usize,
    pub messages: u64,
    pub duration: Duration,
    pub payload_bits_per_sec: f64,
    pub retransmits: u64,
    /// False when the run ended early (peer went offline); the numbers
    /// then cover only the completed portion.
    pub complete: bool,
    pub note: Option<String>,
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "bench bytes={} payload={} messages={} duration_s={:.3} throughput_bits_per_s={:.0} \
             throughput_mbit_per_s={:.2} retransmits={} complete={}",
            self.requested_bytes,
            self.payload_size,
            self.messages,
            self.duration.as_secs_f64(),
            self.payload_bits_per_sec,
            self.payload_bits_per_sec / 1e6,
            self.retransmits,
            self.complete,
        )?;
        if let Some(note) = &self.note {
            write!(f, " note={note:?}")?;
        }
        Ok(())
    }
}

/// Send `total_bytes` to `dest` in `payload_size` messages on `topic`.
///
/// The destination needs no cooperation beyond running the transport:
/// completion is measured from acknowledgments. Call with the sending
/// daemon's handle; `take_events` must still be available.
pub fn run(
    node: &MeshNode,
    dest: &str,
    total_bytes: u64,
    payload_size: usize,
    topic: &str,
    wait_timeout: Duration,
) -> Result<BenchReport, DaemonError> {
    if total_bytes == 0 {
        return Ok(BenchReport {
            requested_bytes: 0,
            payload_size,
            messages: 0,
            duration: Duration::ZERO,
            payload_bits_per_sec: 0.0,
            retransmits: 0,
            complete: true,
            note: Some("zero-byte run; nothing to measure".into()),
        });
    }
    assert!(payload_size > 0, "payload size must be positive");

    let events = node.take_events().ok_or(DaemonError::Stopped)?;
    let retransmits_before = node.status()?.stats.retransmits;

    let total_msgs = total_bytes.div_ceil(payload_size as u64);
    let size_of = |i: u64| -> usize {
        if i + 1 == total_msgs && !total_bytes.is_multiple_of(payload_size as u64) {
            (total_bytes % payload_size as u64) as usize
        } else {
            payload_size
        }
    };

    // Wait for the destination to be discovered and Online.
    let deadline = Instant::now() + wait_timeout;
    loop {
        let status = node.status()?;
        if status.peers.iter().any(|p| p.name == dest && p.state == "online") {
            break;
        }
        if Instant::now() >= deadline {
            return Err(DaemonError::Node(crate::node::NodeError::UnknownPeer(dest.into())));
        }
        std::thread::sleep(Duration::from_millis(20));
    }

    let started = Instant::now();
    let mut submitted: u64 = 0;
    let mut completed: u64 = 0;
    let mut aborted: u64 = 0;
    let mut note = None;

    while submitted < total_msgs.min(PIPELINE as u64) {
        node.publish_to(topic, dest, make_payload(size_of(submitted), 0xBE, submitted))?;
        submitted += 1;
    }

    while completed + aborted < total_msgs {
        match events.recv_timeout(wait_timeout) {
            Ok(NodeEvent::TransferComplete { .. }) => {
                completed += 1;
                if submitted < total_msgs {
                    match node.publish_to(topic, dest, make_payload(size_of(submitted), 0xBE, submitted)) {
                        Ok(_) => submitted += 1,
                        Err(e) => {
                            note = Some(format!("submit failed mid-run: {e}"));
                            aborted += total_msgs - submitted;
                            submitted = total_msgs;
                        }
                    }
                }
            }
            Ok(NodeEvent::TransferAborted { reason, .. }) => {
                aborted += 1;
                if note.is_none() {
                    note = Some(match reason {
                        AbortReason::PeerOffline => "peer went offline mid-run; partial report".into(),
                        AbortReason::Shutdown => "daemon shut down mid-run; partial report".into(),
                    });
                }
                aborted += total_msgs - submitted;
                submitted = total_msgs;
            }
            Ok(_) => {}
            Err(_) => {
                note = Some("timed out waiting for transfer completion; partial report".into());
                break;
            }
        }
    }

    let duration = started.elapsed();
    let delivered_bytes: u64 = (0..completed).map(|i| size_of(i) as u64).sum::<u64>().min(total_bytes);
    let retransmits = node.status()?.stats.retransmits - retransmits_before;
    Ok(BenchReport {
        requested_bytes: total_bytes,
        payload_size,
        messages: completed,
        duration,
        payload_bits_per_sec: if duration.is_zero() {
            0.0
        } else {
            delivered_bytes as f64 * 8.0 / duration.as_secs_f64()
        },
        retransmits,
        complete: completed == total_msgs,
        note,
    })
}
