//! Scenario files: one `key = value` per line, `#` starts a comment.
//!
//! Keys are applied in a fixed order (the order of [`KEYS`]) regardless of
//! where they sit in the file, so `preset` always lays down the base first
//! and `mobility` is settled before `max_speed_mps`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::node::ReplenishMode;
use crate::sim::{ConfigInvalid, Mobility, ScenarioConfig, UnknownPreset};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: {key} given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: {key} = {value:?}: {reason}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
    #[error(transparent)]
    Preset(#[from] UnknownPreset),
    #[error(transparent)]
    Invalid(#[from] ConfigInvalid),
}

/// Every accepted key, in application order.
pub const KEYS: &[&str] = &[
    "preset",
    "seed",
    "duration_s",
    "area_w_m",
    "area_h_m",
    "node_count",
    "tx_range_m",
    "mobility",
    "max_speed_mps",
    "pause_s",
    "positions",
    "flow_count",
    "flow_pairs",
    "flow_rate_pps",
    "buffer_capacity",
    "service_slot_ms",
    "hop_latency_ms",
    "topology_step_ms",
    "malicious_count",
    "malicious_nodes",
    "drop_prob",
    "tamper_prob",
    "drops_certificates",
    "drops_feedback_in_aggregate",
    "tampers_feedback",
    "tampers_certificates",
    "false_accuser",
    "silent_on_challenge",
    "collude",
    "false_accusation_interval_s",
    "challenge_cutoff_s",
    "overhead_window_s",
    "log_packets",
    "alpha",
    "alpha2",
    "delta",
    "maliciousness_threshold",
    "sampling_prob",
    "monitor_window_ms",
    "monitor_threshold",
    "monitor_min_samples",
    "respondent_weight",
    "respondent_min_samples",
    "challenge_ack_timeout_ms",
    "collection_window_ms",
    "challenge_cooldown_ms",
    "f_fraction",
    "exchange_interval_s",
    "replenish_mode",
    "interaction_window_ms",
    "vote_window_ms",
    "vote_quorum",
    "vote_min_samples",
    "alarm_backoff_max_ms",
    "piggyback_budget",
    "cache_capacity",
];

/// One `key = value` entry with its line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Splits text into entries, dropping blanks and comments. Does not check
/// key names.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>, ScenarioError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return Err(ScenarioError::Syntax {
                line,
                text: raw.to_string(),
            });
        };
        let (key, value) = (k.trim(), v.trim());
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(ScenarioError::Syntax {
                line,
                text: raw.to_string(),
            });
        }
        out.push(Entry {
            line,
            key: key.to_string(),
            value: value.to_string(),
        });
    }
    Ok(out)
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    scenario_from_entries(&parse_entries(text)?)
}

/// Builds and validates a config from entries whose keys must all be in
/// [`KEYS`].
pub fn scenario_from_entries(entries: &[Entry]) -> Result<ScenarioConfig, ScenarioError> {
    let mut by_key: BTreeMap<&str, &Entry> = BTreeMap::new();
    for e in entries {
        if !KEYS.contains(&e.key.as_str()) {
            return Err(ScenarioError::UnknownKey {
                line: e.line,
                key: e.key.clone(),
            });
        }
        if by_key.insert(&e.key, e).is_some() {
            return Err(ScenarioError::DuplicateKey {
                line: e.line,
                key: e.key.clone(),
            });
        }
    }
    let mut cfg = match by_key.get("preset") {
        Some(e) => ScenarioConfig::preset(&e.value)?,
        None => ScenarioConfig::default(),
    };
    for key in &KEYS[1..] {
        if let Some(e) = by_key.get(key) {
            apply(&mut cfg, e)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn bad(e: &Entry, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::BadValue {
        line: e.line,
        key: e.key.clone(),
        value: e.value.clone(),
        reason: reason.into(),
    }
}

fn num<T: FromStr>(e: &Entry) -> Result<T, ScenarioError> {
    e.value
        .parse()
        .map_err(|_| bad(e, format!("expected {}", std::any::type_name::<T>())))
}

fn pairs<T: FromStr>(e: &Entry, sep: char) -> Result<Vec<(T, T)>, ScenarioError> {
    e.value
        .split_whitespace()
        .map(|tok| {
            let (a, b) = tok
                .split_once(sep)
                .ok_or_else(|| bad(e, format!("expected items like a{sep}b")))?;
            Ok((
                a.parse().map_err(|_| bad(e, format!("bad number {a:?}")))?,
                b.parse().map_err(|_| bad(e, format!("bad number {b:?}")))?,
            ))
        })
        .collect()
}

fn apply(cfg: &mut ScenarioConfig, e: &Entry) -> Result<(), ScenarioError> {
    let p = &mut cfg.protocol;
    let adv = &mut cfg.adversary;
    match e.key.as_str() {
        "seed" => cfg.rng_seed = num(e)?,
        "duration_s" => cfg.duration_s = num(e)?,
        "area_w_m" => cfg.area_w_m = num(e)?,
        "area_h_m" => cfg.area_h_m = num(e)?,
        "node_count" => cfg.node_count = num(e)?,
        "tx_range_m" => cfg.tx_range_m = num(e)?,
        "mobility" => {
            cfg.mobility = match e.value.as_str() {
                "static" => Mobility::Static,
                "random_waypoint" => match cfg.mobility {
                    Mobility::Static => ScenarioConfig::default().mobility,
                    ref m => m.clone(),
                },
                _ => return Err(bad(e, "expected random_waypoint or static")),
            }
        }
        "max_speed_mps" | "pause_s" => {
            let v = num(e)?;
            match &mut cfg.mobility {
                Mobility::RandomWaypoint {
                    max_speed_mps,
                    pause_s,
                } => {
                    *if e.key == "pause_s" {
                        pause_s
                    } else {
                        max_speed_mps
                    } = v
                }
                Mobility::Static => return Err(bad(e, "only meaningful with random_waypoint")),
            }
        }
        "positions" => cfg.positions = Some(pairs(e, ',')?),
        "flow_count" => cfg.flow_count = num(e)?,
        "flow_pairs" => cfg.flow_pairs = Some(pairs(e, '-')?),
        "flow_rate_pps" => cfg.flow_rate_pps = num(e)?,
        "buffer_capacity" => cfg.buffer_capacity = num(e)?,
        "service_slot_ms" => cfg.service_slot_ms = num(e)?,
        "hop_latency_ms" => cfg.hop_latency_ms = num(e)?,
        "topology_step_ms" => cfg.topology_step_ms = num(e)?,
        "malicious_count" => cfg.malicious_count = num(e)?,
        "malicious_nodes" => {
            cfg.malicious_nodes = Some(
                e.value
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|_| bad(e, format!("bad id {t:?}"))))
                    .collect::<Result<_, _>>()?,
            )
        }
        "drop_prob" => adv.drop_prob = num(e)?,
        "tamper_prob" => adv.tamper_prob = num(e)?,
        "drops_certificates" => adv.drops_certificates = num(e)?,
        "drops_feedback_in_aggregate" => adv.drops_feedback_in_aggregate = num(e)?,
        "tampers_feedback" => adv.tampers_feedback = num(e)?,
        "tampers_certificates" => adv.tampers_certificates = num(e)?,
        "false_accuser" => adv.false_accuser = num(e)?,
        "silent_on_challenge" => adv.silent_on_challenge = num(e)?,
        "collude" => cfg.collude = num(e)?,
        "false_accusation_interval_s" => cfg.false_accusation_interval_s = num(e)?,
        "challenge_cutoff_s" => {
            cfg.challenge_cutoff_s = match e.value.as_str() {
                "none" => None,
                _ => Some(num(e)?),
            }
        }
        "overhead_window_s" => cfg.overhead_window_s = num(e)?,
        "log_packets" => cfg.log_packets = num(e)?,
        "alpha" => p.update.alpha = num(e)?,
        "alpha2" => p.update.alpha2 = num(e)?,
        "delta" => p.update.delta = num(e)?,
        "maliciousness_threshold" => p.update.maliciousness_threshold = num(e)?,
        "sampling_prob" => p.monitor.sampling_prob = num(e)?,
        "monitor_window_ms" => p.monitor.window_ms = num(e)?,
        "monitor_threshold" => p.monitor.threshold = num(e)?,
        "monitor_min_samples" => p.monitor.min_samples = num(e)?,
        "respondent_weight" => p.respondent_weight = num(e)?,
        "respondent_min_samples" => p.respondent_min_samples = num(e)?,
        "challenge_ack_timeout_ms" => p.challenge_ack_timeout_ms = num(e)?,
        "collection_window_ms" => p.collection_window_ms = num(e)?,
        "challenge_cooldown_ms" => p.challenge_cooldown_ms = num(e)?,
        "f_fraction" => p.f_fraction = num(e)?,
        "exchange_interval_s" => p.exchange_interval_ms = num::<u64>(e)? * 1000,
        "replenish_mode" => {
            p.replenish_mode = match e.value.as_str() {
                "interval" => ReplenishMode::Interval,
                "certificate" => ReplenishMode::Certificate,
                _ => return Err(bad(e, "expected interval or certificate")),
            }
        }
        "interaction_window_ms" => p.interaction_window_ms = num(e)?,
        "vote_window_ms" => p.vote_window_ms = num(e)?,
        "vote_quorum" => p.vote_quorum = num(e)?,
        "vote_min_samples" => p.vote_min_samples = num(e)?,
        "alarm_backoff_max_ms" => p.alarm_backoff_max_ms = num(e)?,
        "piggyback_budget" => p.piggyback_budget = num(e)?,
        "cache_capacity" => p.cache_capacity = num(e)?,
        other => unreachable!("key {other} is listed in KEYS but not handled"),
    }
    Ok(())
}

/// Writes a config as a scenario file that parses back to the same config.
/// `preset` is never written; every other field is spelled out.
pub fn render_scenario(cfg: &ScenarioConfig) -> String {
    let p = &cfg.protocol;
    let a = &cfg.adversary;
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        writeln!(s, "{k} = {v}").expect("writing to a String");
    };
    kv("seed", cfg.rng_seed.to_string());
    kv("duration_s", cfg.duration_s.to_string());
    kv("area_w_m", cfg.area_w_m.to_string());
    kv("area_h_m", cfg.area_h_m.to_string());
    kv("node_count", cfg.node_count.to_string());
    kv("tx_range_m", cfg.tx_range_m.to_string());
    match cfg.mobility {
        Mobility::Static => kv("mobility", "static".into()),
        Mobility::RandomWaypoint {
            max_speed_mps,
            pause_s,
        } => {
            kv("mobility", "random_waypoint".into());
            kv("max_speed_mps", max_speed_mps.to_string());
            kv("pause_s", pause_s.to_string());
        }
    }
    if let Some(pos) = &cfg.positions {
        let v: Vec<_> = pos.iter().map(|(x, y)| format!("{x},{y}")).collect();
        kv("positions", v.join(" "));
    }
    kv("flow_count", cfg.flow_count.to_string());
    if let Some(fp) = &cfg.flow_pairs {
        let v: Vec<_> = fp.iter().map(|(x, y)| format!("{x}-{y}")).collect();
        kv("flow_pairs", v.join(" "));
    }
    kv("flow_rate_pps", cfg.flow_rate_pps.to_string());
    kv("buffer_capacity", cfg.buffer_capacity.to_string());
    kv("service_slot_ms", cfg.service_slot_ms.to_string());
    kv("hop_latency_ms", cfg.hop_latency_ms.to_string());
    kv("topology_step_ms", cfg.topology_step_ms.to_string());
    kv("malicious_count", cfg.malicious_count.to_string());
    if let Some(ids) = &cfg.malicious_nodes {
        let v: Vec<_> = ids.iter().map(|i| i.to_string()).collect();
        kv("malicious_nodes", v.join(" "));
    }
    kv("drop_prob", a.drop_prob.to_string());
    kv("tamper_prob", a.tamper_prob.to_string());
    kv("drops_certificates", a.drops_certificates.to_string());
    kv(
        "drops_feedback_in_aggregate",
        a.drops_feedback_in_aggregate.to_string(),
    );
    kv("tampers_feedback", a.tampers_feedback.to_string());
    kv("tampers_certificates", a.tampers_certificates.to_string());
    kv("false_accuser", a.false_accuser.to_string());
    kv("silent_on_challenge", a.silent_on_challenge.to_string());
    kv("collude", cfg.collude.to_string());
    kv(
        "false_accusation_interval_s",
        cfg.false_accusation_interval_s.to_string(),
    );
    kv(
        "challenge_cutoff_s",
        cfg.challenge_cutoff_s
            .map_or("none".into(), |c| c.to_string()),
    );
    kv("overhead_window_s", cfg.overhead_window_s.to_string());
    kv("log_packets", cfg.log_packets.to_string());
    kv("alpha", p.update.alpha.to_string());
    kv("alpha2", p.update.alpha2.to_string());
    kv("delta", p.update.delta.to_string());
    kv(
        "maliciousness_threshold",
        p.update.maliciousness_threshold.to_string(),
    );
    kv("sampling_prob", p.monitor.sampling_prob.to_string());
    kv("monitor_window_ms", p.monitor.window_ms.to_string());
    kv("monitor_threshold", p.monitor.threshold.to_string());
    kv("monitor_min_samples", p.monitor.min_samples.to_string());
    kv("respondent_weight", p.respondent_weight.to_string());
    kv(
        "respondent_min_samples",
        p.respondent_min_samples.to_string(),
    );
    kv(
        "challenge_ack_timeout_ms",
        p.challenge_ack_timeout_ms.to_string(),
    );
    kv("collection_window_ms", p.collection_window_ms.to_string());
    kv("challenge_cooldown_ms", p.challenge_cooldown_ms.to_string());
    kv("f_fraction", p.f_fraction.to_string());
    kv(
        "exchange_interval_s",
        (p.exchange_interval_ms / 1000).to_string(),
    );
    kv(
        "replenish_mode",
        match p.replenish_mode {
            ReplenishMode::Interval => "interval",
            ReplenishMode::Certificate => "certificate",
        }
        .into(),
    );
    kv("interaction_window_ms", p.interaction_window_ms.to_string());
    kv("vote_window_ms", p.vote_window_ms.to_string());
    kv("vote_quorum", p.vote_quorum.to_string());
    kv("vote_min_samples", p.vote_min_samples.to_string());
    kv("alarm_backoff_max_ms", p.alarm_backoff_max_ms.to_string());
    kv("piggyback_budget", p.piggyback_budget.to_string());
    kv("cache_capacity", p.cache_capacity.to_string());
    s
}
