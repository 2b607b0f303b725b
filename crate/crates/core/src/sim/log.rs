//! Newline-delimited event records: `time_ms kind actor subject details`.
//! `subject` is `-` when absent; `details` is a run of `key=value` tokens.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::messages::NodeId;

macro_rules! kinds {
    ($($v:ident => $s:literal,)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum EventKind { $($v,)* }

        impl EventKind {
            pub const ALL: &'static [EventKind] = &[$(EventKind::$v,)*];

            pub fn name(self) -> &'static str {
                match self { $(EventKind::$v => $s,)* }
            }
        }

        impl FromStr for EventKind {
            type Err = LogParseError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($s => Ok(EventKind::$v),)*
                    _ => Err(LogParseError::UnknownKind(s.to_string())),
                }
            }
        }
    };
}

kinds! {
    Config => "config",
    Role => "role",
    LinkUp => "link_up",
    LinkDown => "link_down",
    Waypoint => "waypoint",
    PktSent => "pkt_sent",
    PktForwarded => "pkt_forwarded",
    PktDelivered => "pkt_delivered",
    PktDropped => "pkt_dropped",
    Observed => "observed",
    Suspicion => "suspicion",
    Challenge => "challenge",
    ChallengeAck => "challenge_ack",
    ChallengeLapsed => "challenge_lapsed",
    Collection => "collection",
    Response => "response",
    CertIssued => "cert_issued",
    CertAccepted => "cert_accepted",
    CertRepeat => "cert_repeat",
    CertRejected => "cert_rejected",
    CertCached => "cert_cached",
    TamperEvidence => "tamper_evidence",
    Escalation => "escalation",
    Alarm => "alarm",
    AlarmSuppressed => "alarm_suppressed",
    Vote => "vote",
    Abstain => "abstain",
    VotingClosed => "voting_closed",
    Isolated => "isolated",
    FrameRejected => "frame_rejected",
    FalseAccusation => "false_accusation",
    ExchangeRound => "exchange_round",
    Ledger => "ledger",
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub time_ms: u64,
    pub kind: EventKind,
    pub actor: NodeId,
    pub subject: Option<NodeId>,
    pub details: String,
}

impl Record {
    /// Value of `key` in the details, if present.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.details.split(' ').find_map(|kv| {
            let (k, v) = kv.split_once('=')?;
            (k == key).then_some(v)
        })
    }

    pub fn parse_field<T: FromStr>(&self, key: &str) -> Option<T> {
        self.get(key)?.parse().ok()
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} ", self.time_ms, self.kind, self.actor)?;
        match self.subject {
            Some(s) => write!(f, "{s}")?,
            None => f.write_char('-')?,
        }
        if !self.details.is_empty() {
            write!(f, " {}", self.details)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogParseError {
    #[error("line {line}: expected at least four fields")]
    MissingField { line: usize },
    #[error("line {line}: bad number {value:?}")]
    BadNumber { line: usize, value: String },
    #[error("unknown event kind {0:?}")]
    UnknownKind(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EventLog {
    pub records: Vec<Record>,
}

/// Builds a details string from `(key, value)` pairs.
#[macro_export]
macro_rules! details {
    ($($k:literal = $v:expr),* $(,)?) => {{
        let mut s = String::new();
        $(
            if !s.is_empty() { s.push(' '); }
            s.push_str($k);
            s.push('=');
            s.push_str(&$v.to_string());
        )*
        s
    }};
}

impl EventLog {
    pub fn push(
        &mut self,
        time_ms: u64,
        kind: EventKind,
        actor: NodeId,
        subject: Option<NodeId>,
        details: String,
    ) {
        debug_assert!(!details.contains('\n'));
        self.records.push(Record {
            time_ms,
            kind,
            actor,
            subject,
            details,
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.of_kind(kind).count()
    }

    pub fn render(&self) -> String {
        let mut s = String::with_capacity(self.records.len() * 48);
        for r in &self.records {
            writeln!(s, "{r}").expect("writing to a String");
        }
        s
    }

    pub fn parse(text: &str) -> Result<EventLog, LogParseError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(5, ' ');
            let mut field = || {
                parts
                    .next()
                    .ok_or(LogParseError::MissingField { line: line_no })
            };
            let num = |v: &str| {
                v.parse::<u64>().map_err(|_| LogParseError::BadNumber {
                    line: line_no,
                    value: v.to_string(),
                })
            };
            let time_ms = num(field()?)?;
            let kind = field()?.parse()?;
            let actor = NodeId(num(field()?)? as u32);
            let subject = match field()? {
                "-" => None,
                s => Some(NodeId(num(s)? as u32)),
            };
            let details = parts.next().unwrap_or("").to_string();
            records.push(Record {
                time_ms,
                kind,
                actor,
                subject,
                details,
            });
        }
        Ok(EventLog { records })
    }
}
