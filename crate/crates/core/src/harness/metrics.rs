use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::messages::{CertKey, NodeId};
use crate::sim::{parse_key, EventKind, EventLog};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("incomplete log: {0}")]
    IncompleteLog(&'static str),
}

/// Run-level settings and ground truth recovered from a log.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub seed: u64,
    pub node_count: u32,
    pub duration_ms: u64,
    pub malicious: BTreeSet<NodeId>,
    pub monitor_threshold: f64,
    pub monitor_min_samples: u32,
    pub overhead_window_ms: u64,
}

impl GroundTruth {
    pub fn from_log(log: &EventLog) -> Result<GroundTruth, MetricsError> {
        let c = log
            .of_kind(EventKind::Config)
            .next()
            .ok_or(MetricsError::IncompleteLog("no config record"))?;
        let bad = MetricsError::IncompleteLog("config record lacks a field");
        let gt = GroundTruth {
            seed: c.parse_field("seed").ok_or(bad.clone())?,
            node_count: c.parse_field("nodes").ok_or(bad.clone())?,
            duration_ms: c.parse_field("duration_ms").ok_or(bad.clone())?,
            malicious: log
                .of_kind(EventKind::Role)
                .filter(|r| r.get("role") == Some("malicious"))
                .map(|r| r.actor)
                .collect(),
            monitor_threshold: c.parse_field("mon_threshold").ok_or(bad.clone())?,
            monitor_min_samples: c.parse_field("mon_min_samples").ok_or(bad.clone())?,
            overhead_window_ms: c.parse_field("overhead_window_ms").ok_or(bad)?,
        };
        if log.count(EventKind::Role) != gt.node_count as usize {
            return Err(MetricsError::IncompleteLog("role records missing"));
        }
        Ok(gt)
    }

    pub fn honest(&self) -> impl Iterator<Item = NodeId> + '_ {
        (1..=self.node_count)
            .map(NodeId)
            .filter(|n| !self.malicious.contains(n))
    }

    pub fn honest_count(&self) -> usize {
        self.node_count as usize - self.malicious.len()
    }
}

/// Convergence of one adverse certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct CertConvergence {
    pub key: CertKey,
    /// Some honest node other than the subject got a copy. A certificate seen
    /// only by adversaries has nothing to converge from.
    pub released: bool,
    /// Until every honest node other than the subject had an authentic copy.
    /// A copy rejected for omitting the receiver's own feedback counts: it
    /// arrived and was judged.
    pub total_s: Option<f64>,
    /// Until every honest node that was ever the subject's neighbour held it.
    pub effective_s: Option<f64>,
}

/// A local alarm the LOC baseline would flood.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocAlarm {
    pub time_ms: u64,
    pub watcher: NodeId,
    pub subject: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub false_positive_rate: f64,
    pub false_alarms: u64,
    /// `None` without adversaries.
    pub detection_rate: Option<f64>,
    pub total_convergence_time_s: Option<f64>,
    pub effective_convergence_time_s: Option<f64>,
    pub certificates: u64,
    /// Released certificates some honest node never received.
    pub unconverged_certificates: u64,
    pub withheld_certificates: u64,
    /// Group alarms in the measurement window.
    pub comm_overhead: u64,
    pub alarms_total: u64,
    pub overhead_bytes: u64,
    pub piggyback_bytes: u64,
    pub loc_alarms_window: u64,
    pub loc_alarms_total: u64,
    pub loc_false_positive_rate: f64,
    pub loc_detection_rate: Option<f64>,
    pub buffer_drops: u64,
    pub delivery_ratio: Option<f64>,
}

impl MetricsReport {
    pub const FIELDS: [&'static str; 18] = [
        "false_positive_rate",
        "false_alarms",
        "detection_rate",
        "total_convergence_time_s",
        "effective_convergence_time_s",
        "certificates",
        "unconverged_certificates",
        "withheld_certificates",
        "comm_overhead",
        "alarms_total",
        "overhead_bytes",
        "piggyback_bytes",
        "loc_alarms_window",
        "loc_alarms_total",
        "loc_false_positive_rate",
        "loc_detection_rate",
        "buffer_drops",
        "delivery_ratio",
    ];

    /// Values in [`Self::FIELDS`] order; `None` where undefined.
    pub fn values(&self) -> [Option<f64>; 18] {
        [
            Some(self.false_positive_rate),
            Some(self.false_alarms as f64),
            self.detection_rate,
            self.total_convergence_time_s,
            self.effective_convergence_time_s,
            Some(self.certificates as f64),
            Some(self.unconverged_certificates as f64),
            Some(self.withheld_certificates as f64),
            Some(self.comm_overhead as f64),
            Some(self.alarms_total as f64),
            Some(self.overhead_bytes as f64),
            Some(self.piggyback_bytes as f64),
            Some(self.loc_alarms_window as f64),
            Some(self.loc_alarms_total as f64),
            Some(self.loc_false_positive_rate),
            self.loc_detection_rate,
            Some(self.buffer_drops as f64),
            self.delivery_ratio,
        ]
    }

    pub fn get(&self, field: &str) -> Option<f64> {
        let i = Self::FIELDS.iter().position(|&f| f == field)?;
        self.values()[i]
    }
}

/// Settings for the local-detection baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocParams {
    /// Observed outcomes needed before an evaluation counts. One means every
    /// evaluation above the threshold floods an alarm.
    pub min_samples: u32,
}

impl Default for LocParams {
    fn default() -> Self {
        LocParams { min_samples: 1 }
    }
}

/// Local alarms from every suspicious monitor evaluation, with no sample-count
/// gate, challenge or vote.
pub fn loc_baseline(log: &EventLog) -> Result<Vec<LocAlarm>, MetricsError> {
    loc_baseline_with(log, LocParams::default())
}

pub fn loc_baseline_with(log: &EventLog, p: LocParams) -> Result<Vec<LocAlarm>, MetricsError> {
    let gt = GroundTruth::from_log(log)?;
    Ok(log
        .of_kind(EventKind::Observed)
        .filter_map(|r| {
            let m: f64 = r.parse_field("m")?;
            let n: u32 = r.parse_field("n")?;
            (m > gt.monitor_threshold && n >= p.min_samples).then_some(LocAlarm {
                time_ms: r.time_ms,
                watcher: r.actor,
                subject: r.subject?,
            })
        })
        .collect())
}

fn in_window(times: impl Iterator<Item = u64> + Clone, window_ms: u64) -> u64 {
    let Some(first) = times.clone().min() else {
        return 0;
    };
    times.filter(|&t| t < first + window_ms).count() as u64
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// Per-certificate convergence for every adverse certificate issued.
pub fn certificate_convergence(
    log: &EventLog,
    gt: &GroundTruth,
) -> Result<Vec<CertConvergence>, MetricsError> {
    let mut neighbours: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    for r in log.of_kind(EventKind::LinkUp) {
        let b = r
            .subject
            .ok_or(MetricsError::IncompleteLog("link record lacks a peer"))?;
        neighbours.entry(r.actor).or_default().insert(b);
        neighbours.entry(b).or_default().insert(r.actor);
    }
    let mut held: BTreeMap<CertKey, BTreeMap<NodeId, u64>> = BTreeMap::new();
    for r in &log.records {
        let reached = match r.kind {
            EventKind::CertCached => true,
            EventKind::CertRejected => r.get("verdict") == Some("dropped_feedback"),
            _ => false,
        };
        if let Some(k) = reached.then(|| r.get("key").and_then(parse_key)).flatten() {
            held.entry(k)
                .or_default()
                .entry(r.actor)
                .or_insert(r.time_ms);
        }
    }
    let honest: BTreeSet<NodeId> = gt.honest().collect();
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for r in log.of_kind(EventKind::CertIssued) {
        if r.get("adverse") != Some("1") {
            continue;
        }
        let key = r
            .get("key")
            .and_then(parse_key)
            .ok_or(MetricsError::IncompleteLog(
                "certificate record lacks a key",
            ))?;
        if !seen.insert(key) {
            continue;
        }
        let holders = held.get(&key);
        let released =
            holders.is_some_and(|h| h.keys().any(|n| *n != key.subject && honest.contains(n)));
        let until = |targets: &mut dyn Iterator<Item = &NodeId>| -> Option<f64> {
            let mut last = key.issued_at_ms;
            for n in targets {
                last = last.max(*holders?.get(n)?);
            }
            Some((last - key.issued_at_ms) as f64 / 1000.0)
        };
        let total = until(&mut honest.iter().filter(|&&n| n != key.subject));
        let empty = BTreeSet::new();
        let past_future = neighbours.get(&key.subject).unwrap_or(&empty);
        let effective = until(
            &mut past_future
                .iter()
                .filter(|n| honest.contains(n) && **n != key.subject),
        );
        out.push(CertConvergence {
            key,
            total_s: total,
            effective_s: effective,
            released,
        });
    }
    Ok(out)
}

pub fn compute_metrics(log: &EventLog) -> Result<MetricsReport, MetricsError> {
    let gt = GroundTruth::from_log(log)?;
    let ledger = log
        .of_kind(EventKind::Ledger)
        .last()
        .ok_or(MetricsError::IncompleteLog("no closing ledger record"))?;
    let honest_n = gt.honest_count().max(1) as f64;

    let alarms: Vec<(u64, NodeId)> = log
        .of_kind(EventKind::Alarm)
        .filter_map(|r| Some((r.time_ms, r.subject?)))
        .collect();
    let accused: BTreeSet<NodeId> = alarms
        .iter()
        .map(|a| a.1)
        .filter(|s| !gt.malicious.contains(s))
        .collect();
    let false_alarms = alarms
        .iter()
        .filter(|a| !gt.malicious.contains(&a.1))
        .count() as u64;
    let isolated: BTreeSet<NodeId> = log
        .of_kind(EventKind::Isolated)
        .filter(|r| r.get("raiser").and_then(|v| v.parse().ok()) == Some(r.actor.0))
        .filter_map(|r| r.subject)
        .collect();
    let mal_n = gt.malicious.len();
    let detection_rate = (mal_n > 0).then(|| {
        gt.malicious.iter().filter(|m| isolated.contains(m)).count() as f64 / mal_n as f64
    });

    let certs = certificate_convergence(log, &gt)?;
    let total = mean(certs.iter().filter_map(|c| c.total_s));
    let effective = mean(certs.iter().filter_map(|c| c.effective_s));
    let unconverged = certs
        .iter()
        .filter(|c| c.released && c.total_s.is_none())
        .count() as u64;
    let withheld = certs.iter().filter(|c| !c.released).count() as u64;

    let loc = loc_baseline(log)?;
    let loc_accused: BTreeSet<NodeId> = loc
        .iter()
        .map(|a| a.subject)
        .filter(|s| !gt.malicious.contains(s))
        .collect();
    let loc_detection_rate = (mal_n > 0).then(|| {
        let hit: BTreeSet<NodeId> = loc.iter().map(|a| a.subject).collect();
        gt.malicious.iter().filter(|m| hit.contains(m)).count() as f64 / mal_n as f64
    });

    let field = |k: &str| ledger.parse_field::<u64>(k).unwrap_or(0);
    let sent = field("sent");
    Ok(MetricsReport {
        false_positive_rate: accused.len() as f64 / honest_n,
        false_alarms,
        detection_rate,
        total_convergence_time_s: total,
        effective_convergence_time_s: effective,
        certificates: certs.len() as u64,
        unconverged_certificates: unconverged,
        withheld_certificates: withheld,
        comm_overhead: in_window(alarms.iter().map(|a| a.0), gt.overhead_window_ms),
        alarms_total: alarms.len() as u64,
        overhead_bytes: field("control_bytes"),
        piggyback_bytes: field("piggyback_bytes"),
        loc_alarms_window: in_window(loc.iter().map(|a| a.time_ms), gt.overhead_window_ms),
        loc_alarms_total: loc.len() as u64,
        loc_false_positive_rate: loc_accused.len() as f64 / honest_n,
        loc_detection_rate,
        buffer_drops: field("drop_buffer_full"),
        delivery_ratio: (sent > 0).then(|| field("delivered") as f64 / sent as f64),
    })
}
