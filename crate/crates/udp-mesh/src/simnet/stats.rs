//! Run statistics and their CSV/textual exports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;
use std::time::Duration;

use crate::node::NodeStats;
use crate::time::Timestamp;

/// Per-topic byte and message accounting.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct TopicStats {
    pub submitted_msgs: u64,
    pub submitted_bytes: u64,
    pub delivered_msgs: u64,
    pub delivered_bytes: u64,
    pub rejected_publishes: u64,
}

/// One message arrival at one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arrival {
    pub node: String,
    pub source: String,
    pub topic: String,
    pub at: Timestamp,
}

/// One observed peer-state transition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnTransition {
    pub observer: String,
    pub peer: String,
    pub at: Timestamp,
    pub online: bool,
}

/// Everything a scenario run produces. Deterministic: the same seed and
/// scenario yield a bit-identical value (and bit-identical CSV files).
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub seed: u64,
    pub virtual_duration: Duration,
    pub topics: BTreeMap<String, TopicStats>,
    pub arrivals: Vec<Arrival>,
    pub connectivity: Vec<ConnTransition>,
    pub node_counters: BTreeMap<String, NodeStats>,
    pub max_in_flight: usize,
    pub reassembly_purges: u64,
}

/// Sample mean and standard deviation (n−1 denominator).
pub fn mean_std(samples: &[f64]) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl RunStats {
    /// Intermessage arrival gaps, in seconds, for one (receiving node,
    /// source, topic) stream.
    pub fn intermessage(&self, node: &str, source: &str, topic: &str) -> Vec<f64> {
        let times: Vec<Timestamp> = self
            .arrivals
            .iter()
            .filter(|a| a.node == node && a.source == source && a.topic == topic)
            .map(|a| a.at)
            .collect();
        times.windows(2).map(|w| w[1].since(w[0]).as_secs_f64()).collect()
    }

    /// Distinct (node, source, topic) arrival streams, in output order.
    pub fn arrival_streams(&self) -> Vec<(String, String, String)> {
        let mut streams: Vec<(String, String, String)> =
            self.arrivals.iter().map(|a| (a.node.clone(), a.source.clone(), a.topic.clone())).collect();
        streams.sort();
        streams.dedup();
        streams
    }

    pub fn delivered_bytes(&self, topic: &str) -> u64 {
        self.topics.get(topic).map_or(0, |t| t.delivered_bytes)
    }

    /// Write `arrivals.csv`, `topics.csv`, `connectivity.csv`, and
    /// `counters.csv` into `dir`.
    pub fn write_csvs(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;

        let mut arrivals = String::from("node,source,topic,arrival_s\n");
        for a in &self.arrivals {
            writeln!(arrivals, "{},{},{},{:.9}", a.node, a.source, a.topic, a.at.as_secs_f64()).unwrap();
        }
        std::fs::write(dir.join("arrivals.csv"), arrivals)?;

        let mut topics = String::from(
            "topic,submitted_msgs,submitted_bytes,delivered_msgs,delivered_bytes,rejected_publishes\n",
        );
        for (name, t) in &self.topics {
            writeln!(
                topics,
                "{},{},{},{},{},{}",
                name,
                t.submitted_msgs,
                t.submitted_bytes,
                t.delivered_msgs,
                t.delivered_bytes,
                t.rejected_publishes
            )
            .unwrap();
        }
        std::fs::write(dir.join("topics.csv"), topics)?;

        let mut conn = String::from("observer,peer,time_s,state\n");
        for c in &self.connectivity {
            writeln!(
                conn,
                "{},{},{:.9},{}",
                c.observer,
                c.peer,
                c.at.as_secs_f64(),
                if c.online { "online" } else { "offline" }
            )
            .unwrap();
        }
        std::fs::write(dir.join("connectivity.csv"), conn)?;

        let mut counters = String::from(
            "node,heartbeats_sent,heartbeats_received,data_sent,data_received,acks_sent,acks_received,\
             retransmits,payload_bytes_sent,payload_bytes_delivered,messages_delivered,transfers_completed,\
             transfers_aborted,reassemblies_purged,decode_drops,publishes_rejected\n",
        );
        for (name, s) in &self.node_counters {
            writeln!(
                counters,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                name,
                s.heartbeats_sent,
                s.heartbeats_received,
                s.data_sent,
                s.data_received,
                s.acks_sent,
                s.acks_received,
                s.retransmits,
                s.payload_bytes_sent,
                s.payload_bytes_delivered,
                s.messages_delivered,
                s.transfers_completed,
                s.transfers_aborted,
                s.reassemblies_purged,
                s.decode_drops,
                s.publishes_rejected,
            )
            .unwrap();
        }
        std::fs::write(dir.join("counters.csv"), counters)?;
        Ok(())
    }

    /// Line-oriented `key=value` summary: per-topic byte counts and
    /// intermessage arrival statistics per stream.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "run seed={} duration_s={:.3} max_in_flight={} reassembly_purges={}",
            self.seed,
            self.virtual_duration.as_secs_f64(),
            self.max_in_flight,
            self.reassembly_purges
        )
        .unwrap();
        let total: u64 = self.topics.values().map(|t| t.delivered_bytes).sum();
        for (name, t) in &self.topics {
            let share = if total > 0 { t.delivered_bytes as f64 / total as f64 } else { 0.0 };
            writeln!(
                out,
                "topic name={} submitted_bytes={} delivered_bytes={} delivered_share={:.3} \
                 delivered_msgs={} rejected_publishes={}",
                name, t.submitted_bytes, t.delivered_bytes, share, t.delivered_msgs, t.rejected_publishes
            )
            .unwrap();
        }
        for (node, source, topic) in self.arrival_streams() {
            let gaps = self.intermessage(&node, &source, &topic);
            if gaps.len() < 2 {
                continue;
            }
            let (mean, std) = mean_std(&gaps);
            writeln!(
                out,
                "arrivals node={node} source={source} topic={topic} samples={} \
                 intermessage_mean_s={mean:.4} intermessage_std_s={std:.4}",
                gaps.len()
            )
            .unwrap();
        }
        out
    }
}
