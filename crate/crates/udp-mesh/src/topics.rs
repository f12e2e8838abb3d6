//! Topic configuration and the opaque pub/sub surface.
//!
//! Topics carry serialized byte payloads end-to-end without interpretation:
//! the transport copies and concatenates payload bytes but never reads
//! them. Binding to a concrete middleware happens in external reader/writer
//! adapters; this module only routes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sched::DEFAULT_PRIORITY;
use crate::time::Timestamp;
use crate::wire::{NodeId, MAX_NAME};

/// How messages published on a topic leave the node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum TopicMode {
    /// Reliable point-to-point transfer to a named destination.
    Reliable { dest: String },
    /// Point-to-multipoint delivery to every reachable peer.
    Broadcast,
}

/// One topic table entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicConfig {
    pub name: String,
    #[serde(default = "default_priority")]
    pub priority: u8,
    #[serde(flatten)]
    pub mode: TopicMode,
}

fn default_priority() -> u8 {
    DEFAULT_PRIORITY
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopicError {
    #[error("duplicate topic name {0:?}")]
    DuplicateTopicName(String),
    #[error("topic name {0:?} exceeds {MAX_NAME} bytes")]
    NameTooLong(String),
    #[error("topic name must not be empty")]
    EmptyName,
}

/// A message delivered upward to subscribers. For reliable transfers the
/// payload is byte-identical to what the source submitted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InboundDelivery {
    pub source_id: NodeId,
    pub source_name: String,
    pub topic: String,
    pub payload: Vec<u8>,
    pub arrival_time: Timestamp,
}

/// The per-node topic table: name → delivery mode and priority.
#[derive(Debug, Default)]
pub struct TopicTable {
    modes: BTreeMap<String, TopicMode>,
    priorities: BTreeMap<String, u8>,
}

impl TopicTable {
    pub fn from_configs(configs: &[TopicConfig]) -> Result<TopicTable, TopicError> {
        let mut table = TopicTable::default();
        for cfg in configs {
            if cfg.name.is_empty() {
                return Err(TopicError::EmptyName);
            }
            if cfg.name.len() > MAX_NAME {
                return Err(TopicError::NameTooLong(cfg.name.clone()));
            }
            if table.modes.contains_key(&cfg.name) {
                return Err(TopicError::DuplicateTopicName(cfg.name.clone()));
            }
            table.modes.insert(cfg.name.clone(), cfg.mode.clone());
            table.priorities.insert(cfg.name.clone(), cfg.priority);
        }
        Ok(table)
    }

    /// Replace the whole table. Validation happens before anything is
    /// swapped, so a bad config leaves the current table untouched.
    /// Fragments already queued keep the priority they were enqueued with.
    pub fn reconfigure(&mut self, configs: &[TopicConfig]) -> Result<(), TopicError> {
        *self = TopicTable::from_configs(configs)?;
        Ok(())
    }

    /// Runtime priority change; applies to future submissions only.
    pub fn set_priority(&mut self, topic: &str, priority: u8) {
        self.priorities.insert(topic.to_owned(), priority);
    }

    pub fn priority_of(&self, topic: &str) -> u8 {
        self.priorities.get(topic).copied().unwrap_or(DEFAULT_PRIORITY)
    }

    pub fn mode_of(&self, topic: &str) -> Option<&TopicMode> {
        self.modes.get(topic)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u8, &TopicMode)> {
        self.modes.iter().map(|(name, mode)| (name.as_str(), self.priority_of(name), mode))
    }
}

/// A delivery consumer.
pub type DeliverySink = Box<dyn FnMut(&InboundDelivery) + Send>;

/// Topic → sinks fan-out, driven by the host's delivery thread. Sinks on
/// one topic are invoked one at a time, in subscription order.
#[derive(Default)]
pub struct Subscriptions {
    sinks: BTreeMap<String, Vec<DeliverySink>>,
}

impl Subscriptions {
    pub fn new() -> Subscriptions {
        Subscriptions::default()
    }

    pub fn subscribe(&mut self, topic: &str, sink: DeliverySink) {
        self.sinks.entry(topic.to_owned()).or_default().push(sink);
    }

    /// Hand a delivery to every sink subscribed to its topic. Returns how
    /// many sinks saw it.
    pub fn dispatch(&mut self, delivery: &InboundDelivery) -> usize {
        match self.sinks.get_mut(&delivery.topic) {
            None => 0,
            Some(sinks) => {
                for sink in sinks.iter_mut() {
                    sink(delivery);
                }
                sinks.len()
            }
        }
    }
}

impl std::fmt::Debug for Subscriptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let counts: BTreeMap<&str, usize> = self.sinks.iter().map(|(t, s)| (t.as_str(), s.len())).collect();
        f.debug_struct("Subscriptions").field("sinks", &counts).finish()
    }
}
