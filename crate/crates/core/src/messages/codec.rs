//! Fixed big-endian framing for reputation messages.
//!
//! ```text
//! [0]       version (= 1)
//! [1]       message type
//! [2..6)    subject node id
//! [6..8)    rep_val, fixed point, 1/10000 units
//! [8..16)   timestamp, ms since scenario start
//! [16..24)  nonce
//! [24..28)  sender node id
//! [28..30)  payload length
//! [30..)    payload
//! last 32   authenticity tag over every preceding byte
//! ```

use std::fmt;

use thiserror::Error;

use super::auth::{tag, AuthTag, Secret, TAG_LEN};
use super::NodeId;

pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 30;
pub const MIN_FRAME_LEN: usize = HEADER_LEN + TAG_LEN;
pub const REP_VAL_SCALE: u16 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("frame truncated: {len} bytes")]
    Truncated { len: usize },
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("rep_val raw value {0} exceeds {REP_VAL_SCALE}")]
    RepValOverflow(u16),
    #[error("declared payload length {declared} does not match frame of {actual} bytes")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("payload of {0} bytes exceeds 65535")]
    PayloadTooLarge(usize),
    #[error("malformed payload: {0}")]
    BadPayload(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum RepMessType {
    RepRequest = 0,
    RepResponse = 1,
    RepBroadcast = 2,
    Challenge = 3,
    ChallengeAck = 4,
    VerifyBehavior = 5,
    GlobalAlarm = 6,
    AlarmVote = 7,
    CertExchange = 8,
}

impl RepMessType {
    pub const ALL: [RepMessType; 9] = [
        RepMessType::RepRequest,
        RepMessType::RepResponse,
        RepMessType::RepBroadcast,
        RepMessType::Challenge,
        RepMessType::ChallengeAck,
        RepMessType::VerifyBehavior,
        RepMessType::GlobalAlarm,
        RepMessType::AlarmVote,
        RepMessType::CertExchange,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RepMessType::RepRequest => "rep_request",
            RepMessType::RepResponse => "rep_response",
            RepMessType::RepBroadcast => "rep_broadcast",
            RepMessType::Challenge => "challenge",
            RepMessType::ChallengeAck => "challenge_ack",
            RepMessType::VerifyBehavior => "verify_behavior",
            RepMessType::GlobalAlarm => "global_alarm",
            RepMessType::AlarmVote => "alarm_vote",
            RepMessType::CertExchange => "cert_exchange",
        }
    }
}

impl TryFrom<u8> for RepMessType {
    type Error = CodecError;

    fn try_from(v: u8) -> Result<Self, CodecError> {
        RepMessType::ALL
            .get(v as usize)
            .copied()
            .ok_or(CodecError::UnknownType(v))
    }
}

/// A real in `[0, 1]` stored in 1/10000 units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct RepVal(u16);

impl RepVal {
    pub const ZERO: RepVal = RepVal(0);
    pub const ONE: RepVal = RepVal(REP_VAL_SCALE);

    /// Rounds half-up to the nearest representable value after clamping to
    /// `[0, 1]`.
    pub fn from_f64(v: f64) -> Self {
        let v = crate::trust_math::clamp_unit(v);
        RepVal((v * REP_VAL_SCALE as f64 + 0.5).floor() as u16)
    }

    pub fn from_raw(raw: u16) -> Result<Self, CodecError> {
        if raw > REP_VAL_SCALE {
            Err(CodecError::RepValOverflow(raw))
        } else {
            Ok(RepVal(raw))
        }
    }

    pub fn raw(self) -> u16 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / REP_VAL_SCALE as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ReputationHeader {
    pub version: u8,
    pub mess_type: RepMessType,
    pub subject: NodeId,
    pub rep_val: RepVal,
    pub timestamp_ms: u64,
    pub nonce: u64,
    pub sender: NodeId,
    pub payload_len: u16,
}

impl ReputationHeader {
    pub fn new(
        mess_type: RepMessType,
        sender: NodeId,
        subject: NodeId,
        rep_val: RepVal,
        timestamp_ms: u64,
        nonce: u64,
    ) -> Self {
        ReputationHeader {
            version: VERSION,
            mess_type,
            subject,
            rep_val,
            timestamp_ms,
            nonce,
            sender,
            payload_len: 0,
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.push(self.version);
        out.push(self.mess_type as u8);
        out.extend_from_slice(&self.subject.0.to_be_bytes());
        out.extend_from_slice(&self.rep_val.raw().to_be_bytes());
        out.extend_from_slice(&self.timestamp_ms.to_be_bytes());
        out.extend_from_slice(&self.nonce.to_be_bytes());
        out.extend_from_slice(&self.sender.0.to_be_bytes());
        out.extend_from_slice(&self.payload_len.to_be_bytes());
    }
}

/// A decoded frame. The tag is kept for separate verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub header: ReputationHeader,
    pub payload: Vec<u8>,
    pub tag: AuthTag,
}

impl Frame {
    /// The bytes the tag covers.
    pub fn signed_bytes(&self) -> Vec<u8> {
        unsigned_bytes(&self.header, &self.payload)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.signed_bytes();
        out.extend_from_slice(self.tag.as_bytes());
        out
    }
}

fn unsigned_bytes(header: &ReputationHeader, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + TAG_LEN);
    let mut h = *header;
    h.payload_len = payload.len() as u16;
    h.write(&mut out);
    out.extend_from_slice(payload);
    out
}

/// Encodes and tags a frame. `payload_len` in `header` is overwritten with
/// the real payload length.
pub fn encode_rep_mess(
    header: &ReputationHeader,
    payload: &[u8],
    signer: &Secret,
) -> Result<Vec<u8>, CodecError> {
    if payload.len() > u16::MAX as usize {
        return Err(CodecError::PayloadTooLarge(payload.len()));
    }
    let mut out = unsigned_bytes(header, payload);
    let t = tag(&out, signer);
    out.extend_from_slice(t.as_bytes());
    Ok(out)
}

pub fn decode_rep_mess(bytes: &[u8]) -> Result<Frame, CodecError> {
    if bytes.len() < MIN_FRAME_LEN {
        return Err(CodecError::Truncated { len: bytes.len() });
    }
    let version = bytes[0];
    if version != VERSION {
        return Err(CodecError::BadVersion(version));
    }
    let mess_type = RepMessType::try_from(bytes[1])?;
    let mut r = Reader::new(&bytes[2..HEADER_LEN]);
    let subject = NodeId(r.u32()?);
    let rep_val = RepVal::from_raw(r.u16()?)?;
    let timestamp_ms = r.u64()?;
    let nonce = r.u64()?;
    let sender = NodeId(r.u32()?);
    let payload_len = r.u16()?;
    let expected = MIN_FRAME_LEN + payload_len as usize;
    if bytes.len() != expected {
        return Err(CodecError::LengthMismatch {
            declared: payload_len as usize,
            actual: bytes.len(),
        });
    }
    let payload = bytes[HEADER_LEN..HEADER_LEN + payload_len as usize].to_vec();
    let tag = AuthTag::from_slice(&bytes[expected - TAG_LEN..]).expect("tag slice length");
    Ok(Frame {
        header: ReputationHeader {
            version,
            mess_type,
            subject,
            rep_val,
            timestamp_ms,
            nonce,
            sender,
            payload_len,
        },
        payload,
        tag,
    })
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = &self.header;
        writeln!(f, "version      {}", h.version)?;
        writeln!(
            f,
            "type         {} ({})",
            h.mess_type.name(),
            h.mess_type as u8
        )?;
        writeln!(f, "subject      {}", h.subject)?;
        writeln!(
            f,
            "rep_val      {:.4} (raw {})",
            h.rep_val.to_f64(),
            h.rep_val.raw()
        )?;
        writeln!(f, "timestamp_ms {}", h.timestamp_ms)?;
        writeln!(f, "nonce        {:#018x}", h.nonce)?;
        writeln!(f, "sender       {}", h.sender)?;
        writeln!(f, "payload_len  {}", h.payload_len)?;
        writeln!(f, "payload      {}", hex::encode(&self.payload))?;
        write!(f, "tag          {}", hex::encode(self.tag.as_bytes()))
    }
}

/// Big-endian cursor over a byte slice.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.pos + n > self.buf.len() {
            return Err(CodecError::Truncated {
                len: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn finish(&self) -> Result<(), CodecError> {
        if self.remaining() == 0 {
            Ok(())
        } else {
            Err(CodecError::BadPayload("trailing bytes"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::messages::auth::Secret;
    use proptest::prelude::*;

    fn secret() -> Secret {
        Secret::derive(b"codec-test", 7)
    }

    fn header() -> ReputationHeader {
        ReputationHeader::new(
            RepMessType::RepResponse,
            NodeId(12),
            NodeId(34),
            RepVal::from_f64(0.85),
            123_456,
            0xdead_beef,
        )
    }

    #[test]
    fn rep_val_fixed_point() {
        assert_eq!(RepVal::from_f64(0.85).raw(), 8500);
        assert_eq!(RepVal::from_f64(0.00005).raw(), 1);
        assert_eq!(RepVal::from_f64(0.000049).raw(), 0);
        assert_eq!(RepVal::from_f64(1.7).raw(), 10_000);
        assert_eq!(RepVal::from_f64(-0.2).raw(), 0);
        assert!(RepVal::from_raw(10_001).is_err());
    }

    #[test]
    fn empty_payload_frame_is_62_bytes() {
        let bytes = encode_rep_mess(&header(), &[], &secret()).unwrap();
        assert_eq!(bytes.len(), 62);
    }

    #[test]
    fn layout_offsets() {
        let bytes = encode_rep_mess(&header(), &[0xaa, 0xbb], &secret()).unwrap();
        assert_eq!(bytes[0], 1);
        assert_eq!(bytes[1], 1);
        assert_eq!(&bytes[2..6], &34u32.to_be_bytes());
        assert_eq!(&bytes[6..8], &8500u16.to_be_bytes());
        assert_eq!(&bytes[8..16], &123_456u64.to_be_bytes());
        assert_eq!(&bytes[16..24], &0xdead_beefu64.to_be_bytes());
        assert_eq!(&bytes[24..28], &12u32.to_be_bytes());
        assert_eq!(&bytes[28..30], &2u16.to_be_bytes());
        assert_eq!(&bytes[30..32], &[0xaa, 0xbb]);
        assert_eq!(bytes.len(), 30 + 2 + 32);
    }

    #[test]
    fn decode_errors() {
        let good = encode_rep_mess(&header(), &[], &secret()).unwrap();
        assert_eq!(
            decode_rep_mess(&good[..61]),
            Err(CodecError::Truncated { len: 61 })
        );
        let mut v2 = good.clone();
        v2[0] = 2;
        assert_eq!(decode_rep_mess(&v2), Err(CodecError::BadVersion(2)));
        let mut ty = good.clone();
        ty[1] = 9;
        assert_eq!(decode_rep_mess(&ty), Err(CodecError::UnknownType(9)));
        let mut over = good.clone();
        over[6..8].copy_from_slice(&10_001u16.to_be_bytes());
        assert_eq!(
            decode_rep_mess(&over),
            Err(CodecError::RepValOverflow(10_001))
        );
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(
            decode_rep_mess(&long),
            Err(CodecError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn payload_too_large() {
        let big = vec![0u8; 65_536];
        assert_eq!(
            encode_rep_mess(&header(), &big, &secret()),
            Err(CodecError::PayloadTooLarge(65_536))
        );
    }

    proptest! {
        #[test]
        fn round_trip_is_canonical(
            ty in 0u8..9, subject in any::<u32>(), raw in 0u16..=10_000,
            ts in any::<u64>(), nonce in any::<u64>(), sender in any::<u32>(),
            payload in prop::collection::vec(any::<u8>(), 0..200),
        ) {
            let h = ReputationHeader::new(
                RepMessType::try_from(ty).unwrap(), NodeId(sender), NodeId(subject),
                RepVal::from_raw(raw).unwrap(), ts, nonce,
            );
            let bytes = encode_rep_mess(&h, &payload, &secret()).unwrap();
            let frame = decode_rep_mess(&bytes).unwrap();
            prop_assert_eq!(frame.header.payload_len as usize, payload.len());
            prop_assert_eq!(&frame.payload, &payload);
            prop_assert_eq!(frame.encode(), bytes);
        }

        #[test]
        fn fixed_point_error_bound(v in 0.0f64..=1.0) {
            let r = RepVal::from_f64(v);
            prop_assert!((r.to_f64() - v).abs() <= 5e-5 + 1e-12);
        }
    }
}
