//! Payload layouts for the control message types.

use super::certificate::CertKey;
use super::codec::{CodecError, Reader};
use super::NodeId;

/// Cache listing exchanged between neighbours: each key with the first
/// eight bytes of the holder's certificate digest. Requests reuse the layout
/// with zeroed digests.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExchangeOffer {
    pub entries: Vec<(CertKey, [u8; 8])>,
}

impl ExchangeOffer {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 + self.entries.len() * 24);
        out.extend_from_slice(&(self.entries.len() as u16).to_be_bytes());
        for (k, d) in &self.entries {
            k.write(&mut out);
            out.extend_from_slice(d);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let n = r.u16()? as usize;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            let k = CertKey::read(&mut r)?;
            let d: [u8; 8] = r.take(8)?.try_into().unwrap();
            entries.push((k, d));
        }
        r.finish()?;
        Ok(ExchangeOffer { entries })
    }
}

/// Body of a `global_alarm` frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AlarmPayload {
    /// Opens voting about the frame's subject.
    Alarm { alarm_id: u64 },
    /// Closes voting; carries every collected vote frame so each receiver can
    /// re-check the tally.
    Verdict { alarm_id: u64, votes: Vec<Vec<u8>> },
}

impl AlarmPayload {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            AlarmPayload::Alarm { alarm_id } => {
                out.push(0);
                out.extend_from_slice(&alarm_id.to_be_bytes());
            }
            AlarmPayload::Verdict { alarm_id, votes } => {
                out.push(1);
                out.extend_from_slice(&alarm_id.to_be_bytes());
                out.extend_from_slice(&(votes.len() as u16).to_be_bytes());
                for v in votes {
                    out.extend_from_slice(&(v.len() as u16).to_be_bytes());
                    out.extend_from_slice(v);
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let kind = r.u8()?;
        let alarm_id = r.u64()?;
        let p = match kind {
            0 => AlarmPayload::Alarm { alarm_id },
            1 => {
                let n = r.u16()? as usize;
                let mut votes = Vec::with_capacity(n);
                for _ in 0..n {
                    let len = r.u16()? as usize;
                    votes.push(r.take(len)?.to_vec());
                }
                AlarmPayload::Verdict { alarm_id, votes }
            }
            _ => return Err(CodecError::BadPayload("unknown alarm kind")),
        };
        r.finish()?;
        Ok(p)
    }
}

/// Body of an `alarm_vote` frame: which alarm the vote answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoteRef {
    pub raiser: NodeId,
    pub alarm_id: u64,
}

impl VoteRef {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12);
        out.extend_from_slice(&self.raiser.0.to_be_bytes());
        out.extend_from_slice(&self.alarm_id.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let v = VoteRef {
            raiser: NodeId(r.u32()?),
            alarm_id: r.u64()?,
        };
        r.finish()?;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payloads_round_trip() {
        let key = CertKey {
            subject: NodeId(3),
            issuer: NodeId(3),
            issued_at_ms: 99,
        };
        let offer = ExchangeOffer {
            entries: vec![(key, [7; 8])],
        };
        assert_eq!(ExchangeOffer::decode(&offer.encode()).unwrap(), offer);
        let verdict = AlarmPayload::Verdict {
            alarm_id: 5,
            votes: vec![vec![1, 2, 3], vec![]],
        };
        assert_eq!(AlarmPayload::decode(&verdict.encode()).unwrap(), verdict);
        let alarm = AlarmPayload::Alarm { alarm_id: 1 };
        assert_eq!(AlarmPayload::decode(&alarm.encode()).unwrap(), alarm);
        let v = VoteRef {
            raiser: NodeId(8),
            alarm_id: 42,
        };
        assert_eq!(VoteRef::decode(&v.encode()).unwrap(), v);
        assert!(AlarmPayload::decode(&[2, 0, 0, 0, 0, 0, 0, 0, 0]).is_err());
    }
}
