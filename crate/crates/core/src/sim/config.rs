use std::fmt;

use thiserror::Error;

use crate::node::ProtocolParams;

use super::adversary::AdversaryProfile;

#[derive(Debug, Clone, PartialEq)]
pub enum Mobility {
    RandomWaypoint { max_speed_mps: f64, pause_s: f64 },
    Static,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub duration_s: u64,
    pub area_w_m: f64,
    pub area_h_m: f64,
    pub node_count: u32,
    pub tx_range_m: f64,
    pub mobility: Mobility,
    /// Fixed starting positions, one per node. Random when absent.
    pub positions: Option<Vec<(f64, f64)>>,
    pub flow_count: u32,
    /// Explicit (src, dst) pairs; overrides `flow_count` when set.
    pub flow_pairs: Option<Vec<(u32, u32)>>,
    pub flow_rate_pps: f64,
    pub buffer_capacity: usize,
    pub service_slot_ms: u64,
    pub hop_latency_ms: u64,
    pub topology_step_ms: u64,
    pub malicious_count: u32,
    /// Explicit malicious ids; replaces the random pick of `malicious_count`.
    pub malicious_nodes: Option<Vec<u32>>,
    /// Behaviour given to every malicious node.
    pub adversary: AdversaryProfile,
    /// Every adversary covers for every other one.
    pub collude: bool,
    /// Gap between fabricated accusations by false accusers.
    pub false_accusation_interval_s: u64,
    /// No challenges are started in the last this-many seconds.
    pub challenge_cutoff_s: Option<u64>,
    pub protocol: ProtocolParams,
    /// Length of the group-alarm counting window.
    pub overhead_window_s: u64,
    pub log_packets: bool,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            duration_s: 1000,
            area_w_m: 100.0,
            area_h_m: 100.0,
            node_count: 50,
            tx_range_m: 30.0,
            mobility: Mobility::RandomWaypoint {
                max_speed_mps: 20.0,
                pause_s: 5.0,
            },
            positions: None,
            flow_count: 15,
            flow_pairs: None,
            flow_rate_pps: 2.0,
            buffer_capacity: 64,
            service_slot_ms: 10,
            hop_latency_ms: 5,
            topology_step_ms: 100,
            malicious_count: 5,
            malicious_nodes: None,
            adversary: AdversaryProfile::dropper(),
            collude: false,
            false_accusation_interval_s: 30,
            challenge_cutoff_s: None,
            protocol: ProtocolParams::default(),
            overhead_window_s: 160,
            log_packets: true,
            rng_seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid scenario: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ConfigInvalid(pub Vec<FieldError>);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown preset {0:?} (expected table1, table1-literal or congestion)")]
pub struct UnknownPreset(pub String);

impl ScenarioConfig {
    /// 50 nodes in 100 m x 100 m, five full droppers, 30 m radio range.
    pub fn table1() -> Self {
        ScenarioConfig::default()
    }

    /// Same, with a 200 m range: every node hears every other.
    pub fn table1_literal() -> Self {
        ScenarioConfig {
            tx_range_m: 200.0,
            ..ScenarioConfig::default()
        }
    }

    /// Adversary-free, with enough traffic that relays overflow now and then.
    pub fn congestion() -> Self {
        ScenarioConfig {
            malicious_count: 0,
            flow_count: 20,
            flow_rate_pps: 16.0,
            ..ScenarioConfig::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self, UnknownPreset> {
        match name {
            "table1" => Ok(Self::table1()),
            "table1-literal" => Ok(Self::table1_literal()),
            "congestion" => Ok(Self::congestion()),
            _ => Err(UnknownPreset(name.to_string())),
        }
    }

    pub fn duration_ms(&self) -> u64 {
        self.duration_s * 1000
    }

    /// Protocol parameters with run-level settings folded in.
    pub fn effective_protocol(&self) -> ProtocolParams {
        let mut p = self.protocol.clone();
        if let Some(c) = self.challenge_cutoff_s {
            p.challenge_until_ms = Some(self.duration_ms().saturating_sub(c * 1000));
        }
        p
    }

    pub fn validate(&self) -> Result<(), ConfigInvalid> {
        let mut errs = Vec::new();
        let mut err =
            |field: &'static str, message: String| errs.push(FieldError { field, message });
        if self.duration_s == 0 {
            err("duration_s", "must be positive".into());
        }
        if !(self.area_w_m > 0.0 && self.area_h_m > 0.0) {
            err("area_m", "width and height must be positive".into());
        }
        if self.node_count == 0 {
            err("node_count", "must be positive".into());
        }
        if self.tx_range_m.is_nan() || self.tx_range_m <= 0.0 {
            err("tx_range_m", "must be positive".into());
        }
        if let Mobility::RandomWaypoint {
            max_speed_mps,
            pause_s,
        } = self.mobility
        {
            if max_speed_mps.is_nan() || max_speed_mps <= 0.0 {
                err("max_speed_mps", "speed interval (0, max] is empty".into());
            }
            if pause_s.is_nan() || pause_s < 0.0 {
                err("pause_s", "must be non-negative".into());
            }
        }
        if let Some(p) = &self.positions {
            if p.len() != self.node_count as usize {
                err(
                    "positions",
                    format!("{} positions for {} nodes", p.len(), self.node_count),
                );
            }
            if p.iter().any(|&(x, y)| {
                !(0.0..=self.area_w_m).contains(&x) || !(0.0..=self.area_h_m).contains(&y)
            }) {
                err("positions", "position outside the area".into());
            }
        }
        if let Some(pairs) = &self.flow_pairs {
            if pairs.iter().any(|&(s, d)| {
                s == d || s == 0 || d == 0 || s > self.node_count || d > self.node_count
            }) {
                err(
                    "flow_pairs",
                    "endpoints must be distinct node ids in 1..=node_count".into(),
                );
            }
        } else if self.flow_count > 0 && self.node_count < 2 {
            err("flow_count", "flows need at least two nodes".into());
        }
        if self.flow_rate_pps.is_nan() || self.flow_rate_pps <= 0.0 {
            err("flow_rate_pps", "must be positive".into());
        }
        if self.buffer_capacity == 0 {
            err("buffer_capacity", "must be positive".into());
        }
        if self.service_slot_ms == 0 || self.hop_latency_ms == 0 || self.topology_step_ms == 0 {
            err(
                "timing",
                "slot, latency and topology step must be positive".into(),
            );
        }
        if self.malicious_count >= self.node_count.max(1) {
            err("malicious_count", "must be smaller than node_count".into());
        }
        if let Some(ids) = &self.malicious_nodes {
            let mut sorted = ids.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != ids.len() || ids.iter().any(|&i| i == 0 || i > self.node_count) {
                err(
                    "malicious_nodes",
                    "ids must be distinct and in 1..=node_count".into(),
                );
            } else if ids.len() >= self.node_count as usize {
                err("malicious_nodes", "at least one node must be honest".into());
            }
        }
        if let Err(e) = self.adversary.validate() {
            err("adversary", e);
        }
        if self.false_accusation_interval_s == 0 {
            err("false_accusation_interval_s", "must be positive".into());
        }
        if self
            .challenge_cutoff_s
            .is_some_and(|c| c >= self.duration_s)
        {
            err("challenge_cutoff_s", "must be shorter than the run".into());
        }
        if self.overhead_window_s == 0 {
            err("overhead_window_s", "must be positive".into());
        }
        if let Err(e) = self.protocol.validate() {
            err("protocol", e.to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigInvalid(errs))
        }
    }
}
