#![allow(dead_code)]

pub mod delivery;
pub mod security;

use std::collections::BTreeSet;

use trustwatch_core::messages::{GroupTrustCertificate, NodeId, RepVal, SignedResponse};
use trustwatch_core::sim::{key_str, EventKind, EventLog, Mobility, ScenarioConfig, World};

pub const RANGE: f64 = 30.0;

/// `n` nodes on a horizontal line, neighbours only with the next one.
pub fn line(n: usize) -> Vec<(f64, f64)> {
    (0..n).map(|i| (5.0 + 18.0 * i as f64, 50.0)).collect()
}

/// `n` nodes on a circle of radius 30 m centred in the area. Adjacent nodes
/// are linked and nothing else for 6 <= n <= 10.
pub fn ring(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / n as f64;
            (50.0 + 30.0 * a.cos(), 50.0 + 30.0 * a.sin())
        })
        .collect()
}

/// Row-major `rows x cols` grid, 25 m apart: diagonals are out of range.
pub fn grid(rows: usize, cols: usize) -> Vec<(f64, f64)> {
    let mut v = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            v.push((10.0 + 25.0 * c as f64, 10.0 + 25.0 * r as f64));
        }
    }
    v
}

pub fn static_cfg(pos: Vec<(f64, f64)>) -> ScenarioConfig {
    ScenarioConfig {
        node_count: pos.len() as u32,
        positions: Some(pos),
        mobility: Mobility::Static,
        tx_range_m: RANGE,
        flow_count: 0,
        malicious_count: 0,
        ..ScenarioConfig::default()
    }
}

/// Certificate about `subject`, compiled by itself, in which every listed
/// respondent saw it drop everything.
pub fn adverse_cert(
    world: &World,
    subject: u32,
    respondents: &[u32],
    at: u64,
) -> GroupTrustCertificate {
    let rs = respondents
        .iter()
        .map(|&id| {
            SignedResponse::sign(
                NodeId(id),
                NodeId(subject),
                RepVal::from_f64(1.0),
                true,
                at,
                at + id as u64,
                world.node(NodeId(id)).secret(),
            )
            .0
        })
        .collect();
    GroupTrustCertificate::build(
        NodeId(subject),
        NodeId(subject),
        rs,
        at,
        world.config().protocol.update.maliciousness_threshold,
        world.node(NodeId(subject)).secret(),
    )
}

/// Nodes that logged caching the certificate with this key.
pub fn holders(log: &EventLog, cert: &GroupTrustCertificate) -> BTreeSet<NodeId> {
    let k = key_str(&cert.key());
    log.of_kind(EventKind::CertCached)
        .filter(|r| r.get("key") == Some(&k))
        .map(|r| r.actor)
        .collect()
}

pub fn ids(v: impl IntoIterator<Item = u32>) -> BTreeSet<NodeId> {
    v.into_iter().map(NodeId).collect()
}
