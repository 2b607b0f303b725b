use std::collections::{BTreeMap, VecDeque};

use crate::messages::{sha256, CertKey, ExchangeOffer, GroupTrustCertificate};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CachedCertificate {
    pub cert: GroupTrustCertificate,
    pub bytes: Vec<u8>,
    pub digest: [u8; 32],
}

impl CachedCertificate {
    pub fn new(cert: GroupTrustCertificate) -> Self {
        let bytes = cert.encode();
        let digest = sha256(&bytes);
        CachedCertificate {
            cert,
            bytes,
            digest,
        }
    }

    pub fn short_digest(&self) -> [u8; 8] {
        self.digest[..8].try_into().unwrap()
    }
}

/// Bounded certificate store with oldest-first eviction.
#[derive(Debug, Clone)]
pub struct CertificateCache {
    capacity: usize,
    entries: BTreeMap<CertKey, CachedCertificate>,
    /// Insertion order, oldest at the front.
    order: VecDeque<CertKey>,
}

impl CertificateCache {
    pub fn new(capacity: usize) -> Self {
        CertificateCache {
            capacity: capacity.max(1),
            entries: BTreeMap::new(),
            order: VecDeque::new(),
        }
    }

    pub fn contains(&self, key: &CertKey) -> bool {
        self.entries.contains_key(key)
    }

    pub fn get(&self, key: &CertKey) -> Option<&CachedCertificate> {
        self.entries.get(key)
    }

    /// Inserts unless the key is present. Returns the evicted key, if any.
    pub fn insert(&mut self, entry: CachedCertificate) -> Option<CertKey> {
        let key = entry.cert.key();
        if self.entries.contains_key(&key) {
            return None;
        }
        self.entries.insert(key, entry);
        self.order.push_back(key);
        if self.entries.len() > self.capacity {
            let old = self.order.pop_front().expect("non-empty order");
            self.entries.remove(&old);
            return Some(old);
        }
        None
    }

    /// Replaces the stored copy of an existing key.
    pub fn replace(&mut self, entry: CachedCertificate) {
        let key = entry.cert.key();
        if let Some(slot) = self.entries.get_mut(&key) {
            *slot = entry;
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &CertKey> {
        self.entries.keys()
    }

    /// Up to `n` keys, newest first.
    pub fn most_recent(&self, n: usize) -> Vec<CertKey> {
        self.order.iter().rev().take(n).copied().collect()
    }

    pub fn offer(&self) -> ExchangeOffer {
        ExchangeOffer {
            entries: self
                .entries
                .iter()
                .map(|(k, c)| (*k, c.short_digest()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
