//! Scenario files: a declarative description of nodes, links, topics, and
//! traffic generators, loaded from versioned TOML. See `FORMATS.md` for the
//! schema reference.

use std::path::Path;
use std::time::Duration;

use serde::Deserialize;

use super::{LinkModel, SimError, SimNet};
use crate::node::NodeConfig;
use crate::peers::LivenessConfig;
use crate::reliable::ReliableConfig;
use crate::time::Timestamp;
use crate::topics::TopicConfig;

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

fn default_bandwidth() -> u64 {
    10_000_000
}

fn default_latency_ms() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioNode {
    pub name: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outage {
    pub from_s: f64,
    pub to_s: f64,
}

/// One symmetric link between two named nodes.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioLink {
    pub a: String,
    pub b: String,
    #[serde(default)]
    pub loss: f64,
    #[serde(default = "default_latency_ms")]
    pub latency_ms: f64,
    #[serde(default)]
    pub jitter_ms: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_bps: u64,
    #[serde(default)]
    pub down: Vec<Outage>,
}

/// A topic table entry owned by one publishing node.
// No deny_unknown_fields here: it cannot coexist with #[serde(flatten)].
#[derive(Debug, Clone, Deserialize)]
pub struct ScenarioTopic {
    pub node: String,
    #[serde(flatten)]
    pub config: TopicConfig,
}

/// One fixed-rate traffic generator.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioTraffic {
    pub node: String,
    pub topic: String,
    pub rate_hz: f64,
    pub payload: usize,
    #[serde(default)]
    pub start_s: f64,
    pub stop_s: f64,
}

/// Protocol parameter overrides applied to every node in the scenario.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioProtocol {
    pub heartbeat_period_ms: Option<u64>,
    pub offline_timeout_ms: Option<u64>,
    pub window: Option<usize>,
    pub retransmit_initial_ms: Option<u64>,
    pub retransmit_max_ms: Option<u64>,
    pub reassembly_timeout_ms: Option<u64>,
}

/// A parsed and validated scenario.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub duration_s: f64,
    #[serde(default)]
    pub protocol: ScenarioProtocol,
    pub nodes: Vec<ScenarioNode>,
    #[serde(default)]
    pub links: Vec<ScenarioLink>,
    #[serde(default)]
    pub topics: Vec<ScenarioTopic>,
    #[serde(default)]
    pub traffic: Vec<ScenarioTraffic>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::InvalidScenario(format!("{}: {e}", path.display())))?;
        Scenario::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Scenario, SimError> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    fn validate(&self) -> Result<(), SimError> {
        let fail = |msg: String| Err(SimError::InvalidScenario(msg));
        if self.version != SCENARIO_SCHEMA_VERSION {
            return fail(format!("version: expected {SCENARIO_SCHEMA_VERSION}, got {}", self.version));
        }
        if self.duration_s <= 0.0 {
            return fail("duration_s must be positive".into());
        }
        let has_node = |name: &str| self.nodes.iter().any(|n| n.name == name);
        for (i, link) in self.links.iter().enumerate() {
            for end in [&link.a, &link.b] {
                if !has_node(end) {
                    return fail(format!("links[{i}]: unknown node {end:?}"));
                }
            }
            if link.a == link.b {
                return fail(format!("links[{i}]: link endpoints must differ"));
            }
            self.link_model(link)
                .validate()
                .map_err(|e| SimError::InvalidScenario(format!("links[{i}]: {e}")))?;
        }
        for (i, topic) in self.topics.iter().enumerate() {
            if !has_node(&topic.node) {
                return fail(format!("topics[{i}]: unknown node {:?}", topic.node));
            }
        }
        for (i, t) in self.traffic.iter().enumerate() {
            if !has_node(&t.node) {
                return fail(format!("traffic[{i}]: unknown node {:?}", t.node));
            }
            let configured =
                self.topics.iter().any(|topic| topic.node == t.node && topic.config.name == t.topic);
            if !configured {
                return fail(format!(
                    "traffic[{i}]: topic {:?} not configured on node {:?}",
                    t.topic, t.node
                ));
            }
            if t.rate_hz <= 0.0 {
                return fail(format!("traffic[{i}]: rate_hz must be positive"));
            }
            if t.stop_s <= t.start_s {
                return fail(format!("traffic[{i}]: stop_s must be after start_s"));
            }
        }
        Ok(())
    }

    fn link_model(&self, link: &ScenarioLink) -> LinkModel {
        LinkModel {
            loss: link.loss,
            latency: Duration::from_secs_f64(link.latency_ms / 1e3),
            jitter: Duration::from_secs_f64(link.jitter_ms / 1e3),
            bandwidth_bps: link.bandwidth_bps,
            down: link
                .down
                .iter()
                .map(|o| (Timestamp::from_secs_f64(o.from_s), Timestamp::from_secs_f64(o.to_s)))
                .collect(),
        }
    }

    fn node_config(&self, name: &str) -> NodeConfig {
        let p = &self.protocol;
        let mut liveness = LivenessConfig::default();
        if let Some(ms) = p.heartbeat_period_ms {
            liveness.heartbeat_period = Duration::from_millis(ms);
        }
        if let Some(ms) = p.offline_timeout_ms {
            liveness.offline_timeout = Duration::from_millis(ms);
        }
        let mut reliable = ReliableConfig::default();
        if let Some(w) = p.window {
            reliable.window = w;
        }
        if let Some(ms) = p.retransmit_initial_ms {
            reliable.retransmit_initial = Duration::from_millis(ms);
        }
        if let Some(ms) = p.retransmit_max_ms {
            reliable.retransmit_max = Duration::from_millis(ms);
        }
        if let Some(ms) = p.reassembly_timeout_ms {
            reliable.reassembly_timeout = Duration::from_millis(ms);
        }
        NodeConfig {
            name: name.to_owned(),
            liveness,
            reliable,
            topics: self.topics.iter().filter(|t| t.node == name).map(|t| t.config.clone()).collect(),
        }
    }

    /// Instantiate nodes, links, and generators inside `sim`.
    pub(crate) fn build(&self, sim: &mut SimNet) -> Result<(), SimError> {
        for node in &self.nodes {
            sim.add_node(self.node_config(&node.name))?;
        }
        for link in &self.links {
            let a = sim.handle(&link.a).expect("validated");
            let b = sim.handle(&link.b).expect("validated");
            sim.add_link(a, b, self.link_model(link));
        }
        for t in &self.traffic {
            let h = sim.handle(&t.node).expect("validated");
            sim.add_generator(
                h,
                &t.topic,
                t.payload,
                t.rate_hz,
                Timestamp::from_secs_f64(t.start_s),
                Timestamp::from_secs_f64(t.stop_s),
            );
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::run_scenario;

    const MINIMAL: &str = r#"
        version = 1
        duration_s = 10.0

        [[nodes]]
        name = "base"

        [[nodes]]
        name = "d01"

        [[links]]
        a = "d01"
        b = "base"
        loss = 0.0
        latency_ms = 5.0

        [[topics]]
        node = "d01"
        name = "telemetry"
        priority = 10
        mode = "reliable"
        dest = "base"

        [[traffic]]
        node = "d01"
        topic = "telemetry"
        rate_hz = 1.0
        payload = 300
        start_s = 2.0
        stop_s = 9.0
    "#;

    #[test]
    fn parses_and_runs() {
        let scenario = Scenario::parse(MINIMAL).unwrap();
        let stats = run_scenario(&scenario, 1).unwrap();
        let t = &stats.topics["telemetry"];
        assert_eq!(t.submitted_msgs, 8);
        assert_eq!(t.delivered_msgs, 8);
        assert_eq!(t.delivered_bytes, 8 * 300);
    }

    #[test]
    fn empty_scenario_yields_zero_counters() {
        let scenario = Scenario::parse("version = 1\nduration_s = 1.0\nnodes = []\n").unwrap();
        let stats = run_scenario(&scenario, 1).unwrap();
        assert!(stats.topics.is_empty());
        assert!(stats.arrivals.is_empty());
        assert_eq!(stats.max_in_flight, 0);
    }

    #[test]
    fn validation_names_the_faulty_entry() {
        let text = MINIMAL.replace("b = \"base\"", "b = \"nope\"");
        let err = Scenario::parse(&text).unwrap_err();
        assert!(err.to_string().contains("links[0]"), "{err}");

        let text = MINIMAL.replace("rate_hz = 1.0", "rate_hz = 0.0");
        let err = Scenario::parse(&text).unwrap_err();
        assert!(err.to_string().contains("traffic[0]"), "{err}");

        let err = Scenario::parse("version = 7\nduration_s = 1.0\nnodes = []\n").unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn delivered_never_exceeds_submitted() {
        let text = MINIMAL.replace("loss = 0.0", "loss = 0.3");
        let scenario = Scenario::parse(&text).unwrap();
        let stats = run_scenario(&scenario, 3).unwrap();
        for t in stats.topics.values() {
            assert!(t.delivered_bytes <= t.submitted_bytes);
        }
    }
}
