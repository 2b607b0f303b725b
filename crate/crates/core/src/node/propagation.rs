//! Certificate dissemination: initial flooding to part of the accused's
//! neighbourhood, key piggybacking on routed packets and pairwise cache
//! exchange.

use rand::seq::index;
use rand::Rng;

use super::cache::CertificateCache;
use crate::messages::{CertKey, ExchangeOffer, NodeId};

/// Picks `ceil(f_fraction * |neighbors|)` neighbours uniformly at random.
/// The result is sorted ascending.
pub fn initial_flood<R: Rng + ?Sized>(
    neighbors: &[NodeId],
    f_fraction: f64,
    rng: &mut R,
) -> Vec<NodeId> {
    let n = neighbors.len();
    let want = ((f_fraction.clamp(0.0, 1.0) * n as f64).ceil() as usize).min(n);
    if want == n {
        return neighbors.to_vec();
    }
    let mut picked: Vec<NodeId> = index::sample(rng, n, want)
        .into_iter()
        .map(|i| neighbors[i])
        .collect();
    picked.sort();
    picked
}

/// Keys to attach to an outgoing routed packet: the `budget` most recently
/// cached certificates.
pub fn piggyback(cache: &CertificateCache, budget: usize) -> Vec<CertKey> {
    cache.most_recent(budget)
}

/// Keys from a piggybacked list that the receiver does not hold.
pub fn unknown_keys(cache: &CertificateCache, keys: &[CertKey]) -> Vec<CertKey> {
    keys.iter()
        .filter(|k| !cache.contains(k))
        .copied()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExchangeDelta {
    /// Keys the first party lacks and will request.
    pub a_needs: Vec<CertKey>,
    /// Keys the second party lacks and will request.
    pub b_needs: Vec<CertKey>,
    /// Keys both hold with differing bytes.
    pub mismatched: Vec<CertKey>,
}

impl ExchangeDelta {
    pub fn transfers(&self) -> usize {
        self.a_needs.len() + self.b_needs.len()
    }
}

/// What a holder of `own` should request after seeing `offer`: missing keys
/// and keys whose digests disagree.
pub fn compare_offer(
    own: &CertificateCache,
    offer: &ExchangeOffer,
) -> (Vec<CertKey>, Vec<CertKey>) {
    let mut missing = Vec::new();
    let mut mismatched = Vec::new();
    for (k, d) in &offer.entries {
        match own.get(k) {
            None => missing.push(*k),
            Some(c) if c.short_digest() != *d => mismatched.push(*k),
            Some(_) => {}
        }
    }
    (missing, mismatched)
}

/// Symmetric comparison of two caches.
pub fn exchange_certificates(a: &CertificateCache, b: &CertificateCache) -> ExchangeDelta {
    let (a_needs, mismatched) = compare_offer(a, &b.offer());
    let (b_needs, _) = compare_offer(b, &a.offer());
    ExchangeDelta {
        a_needs,
        b_needs,
        mismatched,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::messages::{GroupTrustCertificate, Secret};
    use crate::node::cache::CachedCertificate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cert(subject: u32, at: u64) -> CachedCertificate {
        CachedCertificate::new(GroupTrustCertificate::build(
            NodeId(subject),
            NodeId(subject),
            vec![],
            at,
            0.5,
            &Secret::derive(b"p", subject as u64),
        ))
    }

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().copied().map(NodeId).collect()
    }

    #[test]
    fn flood_fraction_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let five = ids(&[2, 4, 6, 8, 10]);
        assert_eq!(initial_flood(&five, 1.0, &mut rng), five);
        assert!(initial_flood(&five, 0.0, &mut rng).is_empty());
        let two = initial_flood(&five, 0.4, &mut rng);
        assert_eq!(two.len(), 2);
        assert!(two.windows(2).all(|w| w[0] < w[1]));
        assert!(two.iter().all(|n| five.contains(n)));
        assert_eq!(initial_flood(&five, 0.41, &mut rng).len(), 3);
        assert!(initial_flood(&[], 0.5, &mut rng).is_empty());
    }

    #[test]
    fn exchange_union() {
        let mut a = CertificateCache::new(8);
        let mut b = CertificateCache::new(8);
        a.insert(cert(1, 10));
        b.insert(cert(2, 20));
        let d = exchange_certificates(&a, &b);
        assert_eq!(d.a_needs.len(), 1);
        assert_eq!(d.b_needs.len(), 1);
        assert_eq!(d.a_needs[0].subject, NodeId(2));
        assert!(d.mismatched.is_empty());
    }

    #[test]
    fn identical_caches_transfer_nothing() {
        let mut a = CertificateCache::new(8);
        let mut b = CertificateCache::new(8);
        a.insert(cert(1, 10));
        b.insert(cert(1, 10));
        assert_eq!(exchange_certificates(&a, &b).transfers(), 0);
    }

    #[test]
    fn differing_copies_flagged() {
        let mut a = CertificateCache::new(8);
        let mut b = CertificateCache::new(8);
        a.insert(cert(1, 10));
        let mut bad = cert(1, 10).cert;
        bad.group_trust = crate::messages::RepVal::ZERO;
        b.insert(CachedCertificate::new(bad));
        let d = exchange_certificates(&a, &b);
        assert_eq!(d.mismatched.len(), 1);
        assert_eq!(d.transfers(), 0);
    }

    #[test]
    fn piggyback_budget_and_recency() {
        let mut c = CertificateCache::new(8);
        assert!(piggyback(&c, 2).is_empty());
        c.insert(cert(1, 1));
        c.insert(cert(2, 2));
        c.insert(cert(3, 3));
        let keys = piggyback(&c, 2);
        assert_eq!(
            keys.iter().map(|k| k.subject.0).collect::<Vec<_>>(),
            vec![3, 2]
        );
        assert!(unknown_keys(&c, &keys).is_empty());
    }
}
