//! Wire formats for reputation traffic and the identity bootstrap model.

mod auth;
mod certificate;
mod codec;
mod payload;

use std::fmt;

pub use auth::{
    sha256, tag, AuthError, AuthTag, Authority, IdentityCertificate, PublicBinding, Secret,
    TagVerifier, TAG_LEN,
};
pub use certificate::{
    certificate_group_trust, verify_group_certificate, CertKey, GroupTrustCertificate,
    SignedResponse, Verdict,
};
pub use codec::{
    decode_rep_mess, encode_rep_mess, CodecError, Frame, RepMessType, RepVal, ReputationHeader,
    HEADER_LEN, MIN_FRAME_LEN, REP_VAL_SCALE, VERSION,
};
pub use payload::{AlarmPayload, ExchangeOffer, VoteRef};

/// Node identifier. Zero belongs to the certifying authority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const AUTHORITY: NodeId = NodeId(0);
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Human-readable dump of a frame given as hex, decoding certificate and
/// control payloads where the type calls for it.
pub fn inspect_frame(hex_frame: &str) -> Result<String, CodecError> {
    let cleaned: String = hex_frame.chars().filter(|c| !c.is_whitespace()).collect();
    let bytes = hex::decode(cleaned.trim_start_matches("0x"))
        .map_err(|_| CodecError::BadPayload("input is not valid hex"))?;
    let frame = decode_rep_mess(&bytes)?;
    let mut out = frame.to_string();
    match frame.header.mess_type {
        RepMessType::RepBroadcast => {
            if let Ok(cert) = GroupTrustCertificate::decode(&frame.payload) {
                out.push_str(&format!(
                    "\ncertificate  subject={} issuer={} issued_at_ms={} group_trust={:.4} responses={}",
                    cert.subject,
                    cert.issuer,
                    cert.issued_at_ms,
                    cert.group_trust.to_f64(),
                    cert.responses.len()
                ));
                for r in &cert.responses {
                    out.push_str(&format!(
                        "\n  respondent={} maliciousness={:.4} informed={}",
                        r.respondent,
                        r.maliciousness.to_f64(),
                        r.informed
                    ));
                }
            }
        }
        RepMessType::GlobalAlarm => {
            if let Ok(a) = AlarmPayload::decode(&frame.payload) {
                out.push_str(&format!("\nalarm        {a:?}"));
            }
        }
        RepMessType::CertExchange | RepMessType::RepRequest => {
            if let Ok(o) = ExchangeOffer::decode(&frame.payload) {
                out.push_str(&format!("\nkeys         {}", o.entries.len()));
            }
        }
        _ => {}
    }
    Ok(out)
}
