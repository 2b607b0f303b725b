//! Keyed authenticity tags and the certifying authority that binds node
//! identities to univocal credentials.
//!
//! Tags are `SHA-256(secret || message)`. Verification goes through the
//! authority's key directory, which stands in for public-key verification:
//! a public binding resolves to the secret that produced it.

use std::collections::BTreeMap;
use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::NodeId;

pub const TAG_LEN: usize = 32;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AuthTag([u8; TAG_LEN]);

impl AuthTag {
    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        bytes.try_into().ok().map(AuthTag)
    }

    pub fn as_bytes(&self) -> &[u8; TAG_LEN] {
        &self.0
    }
}

impl fmt::Debug for AuthTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AuthTag({}..)", hex::encode(&self.0[..4]))
    }
}

/// A node's signing secret.
#[derive(Clone, PartialEq, Eq)]
pub struct Secret([u8; 32]);

impl Secret {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Secret(bytes)
    }

    /// Deterministic secret for simulated nodes.
    pub fn derive(domain: &[u8], index: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"trustwatch/secret/");
        h.update(domain);
        h.update(index.to_be_bytes());
        Secret(h.finalize().into())
    }

    pub fn public_binding(&self) -> PublicBinding {
        let mut h = Sha256::new();
        h.update(b"trustwatch/binding/");
        h.update(self.0);
        PublicBinding(h.finalize().into())
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(..)")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicBinding(pub [u8; 32]);

pub fn tag(message: &[u8], secret: &Secret) -> AuthTag {
    let mut h = Sha256::new();
    h.update(secret.0);
    h.update(message);
    AuthTag(h.finalize().into())
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthError {
    #[error("public binding is not registered")]
    UnknownBinding,
    #[error("credential already holds a valid identity certificate")]
    DuplicateCredential,
    #[error("node {0} already holds an identity certificate")]
    DuplicateNode(NodeId),
    #[error("node id 0 is reserved for the authority")]
    ReservedNodeId,
}

/// Anything that can check a tag produced by a node.
pub trait TagVerifier {
    fn verify_node_tag(&self, node: NodeId, message: &[u8], tag: &AuthTag) -> bool;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentityCertificate {
    pub node: NodeId,
    pub credential_hash: [u8; 32],
    pub public_binding: PublicBinding,
    pub authority_tag: AuthTag,
}

impl IdentityCertificate {
    fn signed_bytes(node: NodeId, credential_hash: &[u8; 32], binding: &PublicBinding) -> Vec<u8> {
        let mut out = Vec::with_capacity(68);
        out.extend_from_slice(&node.0.to_be_bytes());
        out.extend_from_slice(credential_hash);
        out.extend_from_slice(&binding.0);
        out
    }
}

/// The certifying authority and its registries.
#[derive(Debug, Clone)]
pub struct Authority {
    secret: Secret,
    directory: BTreeMap<PublicBinding, Secret>,
    by_credential: BTreeMap<[u8; 32], IdentityCertificate>,
    by_node: BTreeMap<NodeId, PublicBinding>,
}

impl Authority {
    pub fn new(secret: Secret) -> Self {
        Authority {
            secret,
            directory: BTreeMap::new(),
            by_credential: BTreeMap::new(),
            by_node: BTreeMap::new(),
        }
    }

    /// Records a node's key pair, as presented over the location-limited
    /// channel at bootstrap.
    pub fn register_key(&mut self, secret: &Secret) -> PublicBinding {
        let binding = secret.public_binding();
        self.directory.insert(binding, secret.clone());
        binding
    }

    pub fn issue_identity(
        &mut self,
        node: NodeId,
        credential: &[u8],
        public_binding: PublicBinding,
    ) -> Result<IdentityCertificate, AuthError> {
        if node == NodeId::AUTHORITY {
            return Err(AuthError::ReservedNodeId);
        }
        if !self.directory.contains_key(&public_binding) {
            return Err(AuthError::UnknownBinding);
        }
        let credential_hash = sha256(credential);
        if self.by_credential.contains_key(&credential_hash) {
            return Err(AuthError::DuplicateCredential);
        }
        if self.by_node.contains_key(&node) {
            return Err(AuthError::DuplicateNode(node));
        }
        let bytes = IdentityCertificate::signed_bytes(node, &credential_hash, &public_binding);
        let cert = IdentityCertificate {
            node,
            credential_hash,
            public_binding,
            authority_tag: tag(&bytes, &self.secret),
        };
        self.by_credential.insert(credential_hash, cert.clone());
        self.by_node.insert(node, public_binding);
        Ok(cert)
    }

    pub fn verify_identity(&self, cert: &IdentityCertificate) -> bool {
        let bytes = IdentityCertificate::signed_bytes(
            cert.node,
            &cert.credential_hash,
            &cert.public_binding,
        );
        tag(&bytes, &self.secret) == cert.authority_tag
            && self.by_credential.get(&cert.credential_hash) == Some(cert)
    }

    pub fn binding_of(&self, node: NodeId) -> Option<PublicBinding> {
        self.by_node.get(&node).copied()
    }

    pub fn identity_count(&self) -> usize {
        self.by_credential.len()
    }

    pub fn verify_tag(
        &self,
        message: &[u8],
        t: &AuthTag,
        binding: &PublicBinding,
    ) -> Result<bool, AuthError> {
        let secret = self
            .directory
            .get(binding)
            .ok_or(AuthError::UnknownBinding)?;
        Ok(tag(message, secret) == *t)
    }
}

impl TagVerifier for Authority {
    fn verify_node_tag(&self, node: NodeId, message: &[u8], t: &AuthTag) -> bool {
        self.binding_of(node)
            .and_then(|b| self.verify_tag(message, t, &b).ok())
            .unwrap_or(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn authority() -> Authority {
        Authority::new(Secret::derive(b"authority", 0))
    }

    #[test]
    fn tags_verify_and_detect_changes() {
        let mut auth = authority();
        let s1 = Secret::derive(b"n", 1);
        let s2 = Secret::derive(b"n", 2);
        let b1 = auth.register_key(&s1);
        let b2 = auth.register_key(&s2);
        let msg = b"hello reputation".to_vec();
        let t = tag(&msg, &s1);
        assert_eq!(auth.verify_tag(&msg, &t, &b1), Ok(true));
        let mut flipped = msg.clone();
        flipped[3] ^= 0x01;
        assert_eq!(auth.verify_tag(&flipped, &t, &b1), Ok(false));
        assert_eq!(auth.verify_tag(&msg, &t, &b2), Ok(false));
        let stranger = Secret::derive(b"n", 3).public_binding();
        assert_eq!(
            auth.verify_tag(&msg, &t, &stranger),
            Err(AuthError::UnknownBinding)
        );
    }

    #[test]
    fn one_identity_per_credential() {
        let mut auth = authority();
        let s1 = Secret::derive(b"n", 1);
        let s2 = Secret::derive(b"n", 2);
        let b1 = auth.register_key(&s1);
        let b2 = auth.register_key(&s2);
        let cert = auth.issue_identity(NodeId(1), b"MAC 00:11:22", b1).unwrap();
        assert_eq!(cert.credential_hash, sha256(b"MAC 00:11:22"));
        assert!(auth.verify_identity(&cert));
        assert_eq!(
            auth.issue_identity(NodeId(2), b"MAC 00:11:22", b2),
            Err(AuthError::DuplicateCredential)
        );
        let other = auth.issue_identity(NodeId(2), b"MAC 00:11:23", b2).unwrap();
        assert_ne!(other.credential_hash, cert.credential_hash);
        assert_eq!(auth.identity_count(), 2);
    }

    #[test]
    fn forged_identity_rejected() {
        let mut auth = authority();
        let s1 = Secret::derive(b"n", 1);
        let b1 = auth.register_key(&s1);
        let mut cert = auth.issue_identity(NodeId(1), b"serial-1", b1).unwrap();
        cert.node = NodeId(9);
        assert!(!auth.verify_identity(&cert));
    }

    #[test]
    fn authority_id_reserved() {
        let mut auth = authority();
        let b = auth.register_key(&Secret::derive(b"n", 1));
        assert_eq!(
            auth.issue_identity(NodeId::AUTHORITY, b"x", b),
            Err(AuthError::ReservedNodeId)
        );
    }
}
