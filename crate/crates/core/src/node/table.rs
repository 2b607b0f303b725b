use std::collections::{BTreeMap, BTreeSet};

use crate::messages::NodeId;
use crate::trust_math::{self, TrustValue};

#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry {
    pub rep_val: TrustValue,
    pub last_updated_ms: u64,
    /// Respondent-set fingerprints of certificates already accepted for this
    /// subject.
    pub accepted_respondent_sets: BTreeMap<[u8; 32], u32>,
}

/// A node's global trust state about suspected nodes. Nodes without an
/// entry are fully trusted.
#[derive(Debug, Clone, Default)]
pub struct ReputationTable {
    entries: BTreeMap<NodeId, TableEntry>,
}

impl ReputationTable {
    pub fn get(&self, node: NodeId) -> Option<&TableEntry> {
        self.entries.get(&node)
    }

    pub fn trust_of(&self, node: NodeId) -> TrustValue {
        self.entries
            .get(&node)
            .map_or(TrustValue::ONE, |e| e.rep_val)
    }

    pub fn entry(&mut self, node: NodeId, now_ms: u64) -> &mut TableEntry {
        self.entries.entry(node).or_insert_with(|| TableEntry {
            rep_val: TrustValue::ONE,
            last_updated_ms: now_ms,
            accepted_respondent_sets: BTreeMap::new(),
        })
    }

    /// Counts this fingerprint and returns `k`, the number of certificates
    /// accepted from this respondent set including the current one.
    pub fn record_certificate(
        &mut self,
        subject: NodeId,
        fingerprint: [u8; 32],
        now_ms: u64,
    ) -> u32 {
        let e = self.entry(subject, now_ms);
        let k = e.accepted_respondent_sets.entry(fingerprint).or_insert(0);
        *k += 1;
        *k
    }

    pub fn set(&mut self, subject: NodeId, value: TrustValue, now_ms: u64) {
        let e = self.entry(subject, now_ms);
        e.rep_val = value;
        e.last_updated_ms = now_ms;
    }

    pub fn replenish_all(&mut self, delta: f64, now_ms: u64) {
        for e in self.entries.values_mut() {
            if let Ok(v) = trust_math::replenish(e.rep_val, delta) {
                if v != e.rep_val {
                    e.rep_val = v;
                    e.last_updated_ms = now_ms;
                }
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &TableEntry)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    pub fn below(&self, threshold: f64) -> BTreeSet<NodeId> {
        self.entries
            .iter()
            .filter(|(_, e)| e.rep_val.get() < threshold)
            .map(|(k, _)| *k)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_nodes_are_trusted() {
        let t = ReputationTable::default();
        assert_eq!(t.trust_of(NodeId(4)), TrustValue::ONE);
    }

    #[test]
    fn fingerprint_counts() {
        let mut t = ReputationTable::default();
        assert_eq!(t.record_certificate(NodeId(1), [1; 32], 0), 1);
        assert_eq!(t.record_certificate(NodeId(1), [1; 32], 5), 2);
        assert_eq!(t.record_certificate(NodeId(1), [2; 32], 5), 1);
        assert_eq!(t.record_certificate(NodeId(2), [1; 32], 5), 1);
    }

    #[test]
    fn ten_replenish_intervals() {
        let mut t = ReputationTable::default();
        t.set(NodeId(3), TrustValue::new(0.38), 0);
        for i in 0..10 {
            t.replenish_all(0.001, i * 60_000);
        }
        assert!((t.trust_of(NodeId(3)).get() - 0.39).abs() < 1e-12);
    }
}
