//! Group trust certificates: the accused node's bundle of every signed
//! respondent feedback plus the group trust computed from them.
//!
//! ```text
//! subject u32 | issuer u32 | issued_at_ms u64 | group_trust u16 | count u16
//! count x ( respondent u32 | maliciousness u16 | flags u8 | timestamp u64 | nonce u64 | tag [32] )
//! certificate tag [32] over everything above
//! ```
//!
//! Each embedded response is the field-by-field content of the respondent's
//! `rep_response` frame, so its tag can be checked by re-encoding that frame.

use std::collections::BTreeSet;

use super::auth::{sha256, tag, AuthTag, Secret, TagVerifier, TAG_LEN};
use super::codec::{CodecError, Reader, RepMessType, RepVal, ReputationHeader};
use super::{encode_rep_mess, Frame, NodeId};
use crate::trust_math::{self, MaliciousnessObservation, UpdateParams};

const RESPONSE_LEN: usize = 4 + 2 + 1 + 8 + 8 + TAG_LEN;
const CERT_HEADER_LEN: usize = 4 + 4 + 8 + 2 + 2;
const FLAG_INFORMED: u8 = 0x01;

/// A respondent's signed feedback about `subject`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedResponse {
    pub respondent: NodeId,
    pub maliciousness: RepVal,
    /// False for respondents that had no monitoring samples; they carry zero
    /// weight and abstain from the majority partition.
    pub informed: bool,
    pub timestamp_ms: u64,
    pub nonce: u64,
    pub tag: AuthTag,
}

impl SignedResponse {
    pub fn payload(informed: bool) -> [u8; 1] {
        [if informed { FLAG_INFORMED } else { 0 }]
    }

    fn header(&self, subject: NodeId) -> ReputationHeader {
        let mut h = ReputationHeader::new(
            RepMessType::RepResponse,
            self.respondent,
            subject,
            self.maliciousness,
            self.timestamp_ms,
            self.nonce,
        );
        h.payload_len = 1;
        h
    }

    /// Encoded `rep_response` frame for this feedback, including the tag.
    pub fn encode_frame(&self, subject: NodeId) -> Vec<u8> {
        Frame {
            header: self.header(subject),
            payload: Self::payload(self.informed).to_vec(),
            tag: self.tag,
        }
        .encode()
    }

    pub fn sign(
        respondent: NodeId,
        subject: NodeId,
        maliciousness: RepVal,
        informed: bool,
        timestamp_ms: u64,
        nonce: u64,
        secret: &Secret,
    ) -> (SignedResponse, Vec<u8>) {
        let header = ReputationHeader::new(
            RepMessType::RepResponse,
            respondent,
            subject,
            maliciousness,
            timestamp_ms,
            nonce,
        );
        let bytes =
            encode_rep_mess(&header, &Self::payload(informed), secret).expect("one-byte payload");
        let t = AuthTag::from_slice(&bytes[bytes.len() - TAG_LEN..]).unwrap();
        (
            SignedResponse {
                respondent,
                maliciousness,
                informed,
                timestamp_ms,
                nonce,
                tag: t,
            },
            bytes,
        )
    }

    /// Lifts a decoded `rep_response` frame.
    pub fn from_frame(frame: &Frame) -> Result<SignedResponse, CodecError> {
        if frame.header.mess_type != RepMessType::RepResponse {
            return Err(CodecError::BadPayload("not a rep_response"));
        }
        let informed = match frame.payload.as_slice() {
            [flags] => flags & FLAG_INFORMED != 0,
            _ => return Err(CodecError::BadPayload("rep_response payload")),
        };
        Ok(SignedResponse {
            respondent: frame.header.sender,
            maliciousness: frame.header.rep_val,
            informed,
            timestamp_ms: frame.header.timestamp_ms,
            nonce: frame.header.nonce,
            tag: frame.tag,
        })
    }

    pub fn verify(&self, subject: NodeId, keys: &impl TagVerifier) -> bool {
        let frame = self.encode_frame(subject);
        let signed = &frame[..frame.len() - TAG_LEN];
        keys.verify_node_tag(self.respondent, signed, &self.tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CertKey {
    pub subject: NodeId,
    pub issuer: NodeId,
    pub issued_at_ms: u64,
}

impl CertKey {
    pub const ENCODED_LEN: usize = 16;

    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.subject.0.to_be_bytes());
        out.extend_from_slice(&self.issuer.0.to_be_bytes());
        out.extend_from_slice(&self.issued_at_ms.to_be_bytes());
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<CertKey, CodecError> {
        Ok(CertKey {
            subject: NodeId(r.u32()?),
            issuer: NodeId(r.u32()?),
            issued_at_ms: r.u64()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupTrustCertificate {
    pub subject: NodeId,
    pub issuer: NodeId,
    pub responses: Vec<SignedResponse>,
    pub group_trust: RepVal,
    pub issued_at_ms: u64,
    pub certificate_tag: AuthTag,
}

/// Outcome of checking a certificate, naming the first failed check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    TamperedResponse {
        respondent: NodeId,
    },
    DroppedFeedback {
        missing: Vec<NodeId>,
        unexpected: Vec<NodeId>,
    },
    WrongGroupTrust {
        claimed: RepVal,
        recomputed: RepVal,
    },
    BadIssuerTag,
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Valid => "valid",
            Verdict::TamperedResponse { .. } => "tampered_response",
            Verdict::DroppedFeedback { .. } => "dropped_feedback",
            Verdict::WrongGroupTrust { .. } => "wrong_group_trust",
            Verdict::BadIssuerTag => "bad_issuer_tag",
        }
    }
}

/// Fewest informed respondents an adverse majority needs. One accuser alone
/// cannot be told apart from a liar.
pub const MIN_ACCUSERS: usize = 2;

/// Group trust over the informed responses. With no informed respondent, or
/// an adverse majority of fewer than [`MIN_ACCUSERS`], the result is full trust.
pub fn certificate_group_trust(responses: &[SignedResponse], threshold: f64) -> (RepVal, bool) {
    let obs: Vec<_> = responses
        .iter()
        .filter(|r| r.informed)
        .map(|r| MaliciousnessObservation::new(r.respondent, r.maliciousness.to_f64()))
        .collect();
    match trust_math::group_trust(&obs, threshold) {
        Ok(g) if g.adverse && g.majority.len() < MIN_ACCUSERS => (RepVal::ONE, false),
        Ok(g) => (RepVal::from_f64(g.group_trust.get()), g.adverse),
        Err(_) => (RepVal::ONE, false),
    }
}

impl GroupTrustCertificate {
    /// Builds and tags a certificate from collected responses.
    pub fn build(
        subject: NodeId,
        issuer: NodeId,
        mut responses: Vec<SignedResponse>,
        issued_at_ms: u64,
        threshold: f64,
        issuer_secret: &Secret,
    ) -> GroupTrustCertificate {
        responses.sort_by_key(|r| r.respondent);
        responses.dedup_by_key(|r| r.respondent);
        let (group_trust, _) = certificate_group_trust(&responses, threshold);
        let mut cert = GroupTrustCertificate {
            subject,
            issuer,
            responses,
            group_trust,
            issued_at_ms,
            certificate_tag: AuthTag::from_slice(&[0; TAG_LEN]).unwrap(),
        };
        cert.resign(issuer_secret);
        cert
    }

    /// Recomputes the certificate tag after an edit.
    pub fn resign(&mut self, secret: &Secret) {
        self.certificate_tag = tag(&self.signed_bytes(), secret);
    }

    pub fn key(&self) -> CertKey {
        CertKey {
            subject: self.subject,
            issuer: self.issuer,
            issued_at_ms: self.issued_at_ms,
        }
    }

    pub fn respondents(&self) -> BTreeSet<NodeId> {
        self.responses.iter().map(|r| r.respondent).collect()
    }

    /// Fingerprint of the respondents that carried weight.
    pub fn respondent_fingerprint(&self) -> [u8; 32] {
        let mut bytes = Vec::new();
        for r in self.responses.iter().filter(|r| r.informed) {
            bytes.extend_from_slice(&r.respondent.0.to_be_bytes());
        }
        sha256(&bytes)
    }

    /// True when the majority of informed respondents sits at or above the
    /// maliciousness threshold.
    pub fn is_adverse(&self, threshold: f64) -> bool {
        certificate_group_trust(&self.responses, threshold).1
    }

    fn signed_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CERT_HEADER_LEN + self.responses.len() * RESPONSE_LEN);
        out.extend_from_slice(&self.subject.0.to_be_bytes());
        out.extend_from_slice(&self.issuer.0.to_be_bytes());
        out.extend_from_slice(&self.issued_at_ms.to_be_bytes());
        out.extend_from_slice(&self.group_trust.raw().to_be_bytes());
        out.extend_from_slice(&(self.responses.len() as u16).to_be_bytes());
        for r in &self.responses {
            out.extend_from_slice(&r.respondent.0.to_be_bytes());
            out.extend_from_slice(&r.maliciousness.raw().to_be_bytes());
            out.push(SignedResponse::payload(r.informed)[0]);
            out.extend_from_slice(&r.timestamp_ms.to_be_bytes());
            out.extend_from_slice(&r.nonce.to_be_bytes());
            out.extend_from_slice(r.tag.as_bytes());
        }
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.signed_bytes();
        out.extend_from_slice(self.certificate_tag.as_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<GroupTrustCertificate, CodecError> {
        let mut r = Reader::new(bytes);
        let subject = NodeId(r.u32()?);
        let issuer = NodeId(r.u32()?);
        let issued_at_ms = r.u64()?;
        let group_trust = RepVal::from_raw(r.u16()?)?;
        let count = r.u16()? as usize;
        let mut responses = Vec::with_capacity(count);
        for _ in 0..count {
            let respondent = NodeId(r.u32()?);
            let maliciousness = RepVal::from_raw(r.u16()?)?;
            let flags = r.u8()?;
            if flags & !FLAG_INFORMED != 0 {
                return Err(CodecError::BadPayload("unknown response flags"));
            }
            let timestamp_ms = r.u64()?;
            let nonce = r.u64()?;
            let t = AuthTag::from_slice(r.take(TAG_LEN)?).unwrap();
            responses.push(SignedResponse {
                respondent,
                maliciousness,
                informed: flags & FLAG_INFORMED != 0,
                timestamp_ms,
                nonce,
                tag: t,
            });
        }
        if responses
            .windows(2)
            .any(|w| w[0].respondent >= w[1].respondent)
        {
            return Err(CodecError::BadPayload("responses not in canonical order"));
        }
        let certificate_tag = AuthTag::from_slice(r.take(TAG_LEN)?).unwrap();
        r.finish()?;
        Ok(GroupTrustCertificate {
            subject,
            issuer,
            responses,
            group_trust,
            issued_at_ms,
            certificate_tag,
        })
    }

    /// Informed feedback as weighted observations. `trust_of` supplies the
    /// evaluating node's trust in each respondent.
    pub fn observations(
        &self,
        weight: f64,
        trust_of: impl Fn(NodeId) -> f64,
    ) -> Vec<MaliciousnessObservation> {
        self.responses
            .iter()
            .filter(|r| r.informed)
            .map(|r| {
                MaliciousnessObservation::new(r.respondent, r.maliciousness.to_f64())
                    .with_weight(weight)
                    .with_trust(trust_of(r.respondent))
            })
            .collect()
    }
}

/// Checks, in order: every response tag, the respondent set against
/// `expected_respondents`, the group trust (to within one fixed-point unit),
/// and the issuer's certificate tag.
pub fn verify_group_certificate(
    cert: &GroupTrustCertificate,
    expected_respondents: &BTreeSet<NodeId>,
    params: &UpdateParams,
    keys: &impl TagVerifier,
) -> Verdict {
    for r in &cert.responses {
        if !r.verify(cert.subject, keys) {
            return Verdict::TamperedResponse {
                respondent: r.respondent,
            };
        }
    }
    let present = cert.respondents();
    if &present != expected_respondents {
        return Verdict::DroppedFeedback {
            missing: expected_respondents.difference(&present).copied().collect(),
            unexpected: present.difference(expected_respondents).copied().collect(),
        };
    }
    let (recomputed, _) = certificate_group_trust(&cert.responses, params.maliciousness_threshold);
    if recomputed.raw().abs_diff(cert.group_trust.raw()) > 1 {
        return Verdict::WrongGroupTrust {
            claimed: cert.group_trust,
            recomputed,
        };
    }
    if !keys.verify_node_tag(cert.issuer, &cert.signed_bytes(), &cert.certificate_tag) {
        return Verdict::BadIssuerTag;
    }
    Verdict::Valid
}
