use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;

use crate::messages::NodeId;

/// How a compromised node misbehaves. Applied by the simulator around the
/// node's honest protocol code.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdversaryProfile {
    /// Probability of silently dropping a data packet it should forward.
    pub drop_prob: f64,
    /// Probability of altering a data packet it forwards.
    pub tamper_prob: f64,
    /// Withholds other nodes' certificates from exchange.
    pub drops_certificates: bool,
    /// Strips adverse feedback from its own certificates.
    pub drops_feedback_in_aggregate: bool,
    /// Edits adverse feedback values in its own certificates.
    pub tampers_feedback: bool,
    /// Corrupts other nodes' certificates it hands on.
    pub tampers_certificates: bool,
    /// Challenges honest neighbours without cause and reports them as fully
    /// malicious.
    pub false_accuser: bool,
    /// Never acknowledges or answers a challenge.
    pub silent_on_challenge: bool,
    /// Nodes this adversary covers for when responding and voting.
    pub colluding_set: Option<BTreeSet<NodeId>>,
}

impl AdversaryProfile {
    pub fn dropper() -> Self {
        AdversaryProfile {
            drop_prob: 1.0,
            ..AdversaryProfile::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("drop_prob", self.drop_prob),
            ("tamper_prob", self.tamper_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        Ok(())
    }

    pub fn colludes_with(&self, n: NodeId) -> bool {
        self.colluding_set.as_ref().is_some_and(|s| s.contains(&n))
    }
}

/// Picks `count` distinct malicious nodes out of `1..=node_count`.
pub fn pick_roster<R: Rng + ?Sized>(node_count: u32, count: u32, rng: &mut R) -> BTreeSet<NodeId> {
    index::sample(rng, node_count as usize, count as usize)
        .into_iter()
        .map(|i| NodeId(i as u32 + 1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roster_size_and_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = pick_roster(50, 5, &mut rng);
        assert_eq!(r.len(), 5);
        assert!(r.iter().all(|n| (1..=50).contains(&n.0)));
        assert!(pick_roster(10, 0, &mut rng).is_empty());
    }

    #[test]
    fn probabilities_checked() {
        let p = AdversaryProfile {
            drop_prob: 1.5,
            ..AdversaryProfile::default()
        };
        assert!(p.validate().is_err());
        assert!(AdversaryProfile::dropper().validate().is_ok());
    }
}
