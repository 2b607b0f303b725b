//! One-variable parameter sweeps over a base scenario.
//!
//! A sweep file is a scenario file with a few extra keys:
//!
//! ```text
//! variable = max_speed        # node_count | f_fraction | malicious_fraction | max_speed
//! values = 5, 10, 20
//! repetitions = 8
//! seed_base = 1               # optional, default 1
//! seed_policy = shared        # shared | per_run
//! metric = effective_convergence_time_s
//! preset = table1             # anything else is a scenario key
//! ```

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::batch::{run_batch, HarnessError};
use super::metrics::MetricsReport;
use super::scenario::{parse_entries, scenario_from_entries, Entry, ScenarioError};
use crate::sim::{Mobility, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    NodeCount,
    FFraction,
    /// Share of nodes that are malicious, rounded to a whole count.
    MaliciousFraction,
    MaxSpeed,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::NodeCount => "node_count",
            SweepVar::FFraction => "f_fraction",
            SweepVar::MaliciousFraction => "malicious_fraction",
            SweepVar::MaxSpeed => "max_speed",
        }
    }

    /// Sets this variable on `cfg`.
    pub fn apply(self, cfg: &mut ScenarioConfig, v: f64) -> Result<(), SweepError> {
        let bad = |why: &str| SweepError::BadPoint {
            variable: self.name(),
            value: v,
            reason: why.to_string(),
        };
        match self {
            SweepVar::NodeCount => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(bad("node count must be a positive whole number"));
                }
                if cfg.positions.is_some() {
                    return Err(bad("base scenario pins positions"));
                }
                cfg.node_count = v as u32;
            }
            SweepVar::FFraction => cfg.protocol.f_fraction = v,
            SweepVar::MaliciousFraction => {
                cfg.malicious_count = (v * cfg.node_count as f64).round() as u32;
            }
            SweepVar::MaxSpeed => match &mut cfg.mobility {
                Mobility::RandomWaypoint { max_speed_mps, .. } => *max_speed_mps = v,
                Mobility::Static => return Err(bad("base scenario is static")),
            },
        }
        Ok(())
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVar {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        [
            SweepVar::NodeCount,
            SweepVar::FFraction,
            SweepVar::MaliciousFraction,
            SweepVar::MaxSpeed,
        ]
        .into_iter()
        .find(|v| v.name() == s)
        .ok_or_else(|| "expected node_count, f_fraction, malicious_fraction or max_speed".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedPolicy {
    /// Repetition `r` uses `base + r` at every value, so each value sees the
    /// same set of worlds.
    Shared { base: u64 },
    /// Every run gets its own seed, `base + run_id`.
    PerRun { base: u64 },
}

impl SeedPolicy {
    pub fn base(self) -> u64 {
        match self {
            SeedPolicy::Shared { base } | SeedPolicy::PerRun { base } => base,
        }
    }

    pub fn with_base(self, base: u64) -> Self {
        match self {
            SeedPolicy::Shared { .. } => SeedPolicy::Shared { base },
            SeedPolicy::PerRun { .. } => SeedPolicy::PerRun { base },
        }
    }

    fn seed(self, run_id: usize, rep: u32) -> u64 {
        match self {
            SeedPolicy::Shared { base } => base.wrapping_add(rep as u64),
            SeedPolicy::PerRun { base } => base.wrapping_add(run_id as u64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVar,
    pub values: Vec<f64>,
    pub repetitions: u32,
    pub base: ScenarioConfig,
    pub seeds: SeedPolicy,
    /// Metrics field plotted against the variable.
    pub metric: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("{0}")]
    Spec(String),
    #[error("{variable} = {value}: {reason}")]
    BadPoint {
        variable: &'static str,
        value: f64,
        reason: String,
    },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

/// One planned run.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub run_id: usize,
    pub value: f64,
    pub config: ScenarioConfig,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.repetitions == 0 {
            return Err(SweepError::Spec("repetitions must be at least 1".into()));
        }
        if self.values.is_empty() {
            return Err(SweepError::Spec("values must not be empty".into()));
        }
        if !MetricsReport::FIELDS.contains(&self.metric.as_str()) {
            return Err(SweepError::Spec(format!(
                "unknown metric {:?}",
                self.metric
            )));
        }
        Ok(())
    }

    /// Every run in order: values outermost, repetitions innermost.
    pub fn points(&self) -> Result<Vec<SweepPoint>, SweepError> {
        self.validate()?;
        let mut out = Vec::new();
        for &value in &self.values {
            for rep in 0..self.repetitions {
                let run_id = out.len();
                let mut config = self.base.clone();
                self.variable.apply(&mut config, value)?;
                config.rng_seed = self.seeds.seed(run_id, rep);
                config.validate().map_err(HarnessError::from)?;
                out.push(SweepPoint {
                    run_id,
                    value,
                    config,
                });
            }
        }
        Ok(out)
    }
}

const SWEEP_KEYS: [&str; 6] = [
    "variable",
    "values",
    "repetitions",
    "seed_base",
    "seed_policy",
    "metric",
];

pub fn parse_sweep(text: &str) -> Result<SweepSpec, SweepError> {
    let entries = parse_entries(text)?;
    let (sweep, scenario): (Vec<Entry>, Vec<Entry>) = entries
        .into_iter()
        .partition(|e| SWEEP_KEYS.contains(&e.key.as_str()));
    let get = |k: &str| sweep.iter().find(|e| e.key == k);
    let need = |k: &str| get(k).ok_or_else(|| SweepError::Spec(format!("missing key {k}")));
    let bad =
        |e: &Entry, why: String| SweepError::Spec(format!("line {}: {}: {why}", e.line, e.key));
    for (i, e) in sweep.iter().enumerate() {
        if sweep[..i].iter().any(|o| o.key == e.key) {
            return Err(bad(e, "given twice".into()));
        }
    }

    let e = need("variable")?;
    let variable: SweepVar = e.value.parse().map_err(|m| bad(e, m))?;
    let e = need("values")?;
    let values = e
        .value
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| bad(e, "expected comma-separated numbers".into()))?;
    let e = need("repetitions")?;
    let repetitions = e
        .value
        .parse()
        .map_err(|_| bad(e, "expected a count".into()))?;
    let base = match get("seed_base") {
        Some(e) => e
            .value
            .parse()
            .map_err(|_| bad(e, "expected an integer".into()))?,
        None => 1,
    };
    let seeds = match get("seed_policy").map(|e| (e, e.value.as_str())) {
        None | Some((_, "shared")) => SeedPolicy::Shared { base },
        Some((_, "per_run")) => SeedPolicy::PerRun { base },
        Some((e, _)) => return Err(bad(e, "expected shared or per_run".into())),
    };
    let metric = need("metric")?.value.clone();
    let spec = SweepSpec {
        variable,
        values,
        repetitions,
        base: scenario_from_entries(&scenario)?,
        seeds,
        metric,
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub run_id: usize,
    pub seed: u64,
    pub value: f64,
    pub report: MetricsReport,
}

/// Per-value summary over the runs where a field is defined.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub value: f64,
    pub mean: Vec<Option<f64>>,
    /// Sample standard deviation (n - 1); zero for a single run.
    pub stddev: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub variable: SweepVar,
    pub metric: String,
    pub rows: Vec<RunRow>,
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, SweepError> {
    let points = spec.points()?;
    let cfgs: Vec<_> = points.iter().map(|p| p.config.clone()).collect();
    let reports = run_batch(&cfgs)?;
    let rows = points
        .into_iter()
        .zip(reports)
        .map(|(p, report)| RunRow {
            run_id: p.run_id,
            seed: p.config.rng_seed,
            value: p.value,
            report,
        })
        .collect();
    Ok(SweepResult {
        variable: spec.variable,
        metric: spec.metric.clone(),
        rows,
    })
}

pub fn mean_stddev(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, sd))
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SweepResult {
    /// Distinct values in first-seen order with their summaries.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut values: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !values.contains(&r.value) {
                values.push(r.value);
            }
        }
        values
            .into_iter()
            .map(|value| {
                let runs: Vec<_> = self.rows.iter().filter(|r| r.value == value).collect();
                let (mut mean, mut stddev) = (Vec::new(), Vec::new());
                for i in 0..MetricsReport::FIELDS.len() {
                    let xs: Vec<f64> = runs.iter().filter_map(|r| r.report.values()[i]).collect();
                    let ms = mean_stddev(&xs);
                    mean.push(ms.map(|m| m.0));
                    stddev.push(ms.map(|m| m.1));
                }
                Aggregate {
                    value,
                    mean,
                    stddev,
                }
            })
            .collect()
    }

    /// Mean of `field` at each value.
    pub fn means(&self, field: &str) -> Vec<(f64, Option<f64>)> {
        let Some(i) = MetricsReport::FIELDS.iter().position(|&f| f == field) else {
            return Vec::new();
        };
        self.aggregates()
            .into_iter()
            .map(|a| (a.value, a.mean[i]))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let var = self.variable.name();
        let mut header = vec!["run_id", "seed", "independent_var", "value"];
        header.extend(MetricsReport::FIELDS);
        w.write_record(&header).expect("in-memory csv");
        for r in &self.rows {
            let mut rec = vec![
                r.run_id.to_string(),
                r.seed.to_string(),
                var.into(),
                r.value.to_string(),
            ];
            rec.extend(r.report.values().into_iter().map(cell));
            w.write_record(&rec).expect("in-memory csv");
        }
        for a in self.aggregates() {
            for (label, vals) in [("mean", &a.mean), ("stddev", &a.stddev)] {
                let mut rec = vec![
                    label.to_string(),
                    String::new(),
                    var.into(),
                    a.value.to_string(),
                ];
                rec.extend(vals.iter().map(|&v| cell(v)));
                w.write_record(&rec).expect("in-memory csv");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }
}

/// CSV for a single run, in the sweep schema with no independent variable.
pub fn single_run_csv(seed: u64, report: &MetricsReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["run_id", "seed", "independent_var", "value"];
    header.extend(MetricsReport::FIELDS);
    w.write_record(&header).expect("in-memory csv");
    let mut rec = vec![
        "0".to_string(),
        seed.to_string(),
        "none".into(),
        String::new(),
    ];
    rec.extend(report.values().into_iter().map(cell));
    w.write_record(&rec).expect("in-memory csv");
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = "\
variable = max_speed
values = 5, 10
repetitions = 2
seed_base = 7
metric = detection_rate
duration_s = 30
node_count = 10
malicious_count = 1
flow_count = 3
";

    #[test]
    fn parses_and_plans_shared_seeds() {
        let spec = parse_sweep(SPEC).unwrap();
        assert_eq!(spec.variable, SweepVar::MaxSpeed);
        assert_eq!(spec.values, vec![5.0, 10.0]);
        assert_eq!(spec.base.node_count, 10);
        let pts = spec.points().unwrap();
        let seeds: Vec<_> = pts.iter().map(|p| p.config.rng_seed).collect();
        assert_eq!(seeds, vec![7, 8, 7, 8]);
        assert!(matches!(
            pts[3].config.mobility,
            Mobility::RandomWaypoint { max_speed_mps, .. } if max_speed_mps == 10.0
        ));
    }

    #[test]
    fn per_run_seeds_are_distinct() {
        let spec = parse_sweep(&format!("{SPEC}seed_policy = per_run\n")).unwrap();
        let seeds: Vec<_> = spec
            .points()
            .unwrap()
            .iter()
            .map(|p| p.config.rng_seed)
            .collect();
        assert_eq!(seeds, vec![7, 8, 9, 10]);
    }

    #[test]
    fn spec_errors() {
        assert!(parse_sweep(&SPEC.replace("max_speed\n", "colour\n")).is_err());
        assert!(parse_sweep(&SPEC.replace("repetitions = 2", "repetitions = 0")).is_err());
        assert!(parse_sweep(&SPEC.replace("detection_rate", "happiness")).is_err());
        assert!(matches!(
            parse_sweep(&format!("{SPEC}bogus = 1\n")),
            Err(SweepError::Scenario(ScenarioError::UnknownKey { .. }))
        ));
        let spec = parse_sweep(&format!("{SPEC}mobility = static\n")).unwrap();
        assert!(matches!(spec.points(), Err(SweepError::BadPoint { .. })));
    }

    #[test]
    fn malicious_fraction_rounds_to_count() {
        let mut cfg = ScenarioConfig::default();
        SweepVar::MaliciousFraction.apply(&mut cfg, 0.3).unwrap();
        assert_eq!(cfg.malicious_count, 15);
    }

    #[test]
    fn mean_and_sample_stddev() {
        let (m, s) = mean_stddev(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_stddev(&[3.0]), Some((3.0, 0.0)));
        assert_eq!(mean_stddev(&[]), None);
    }

    #[test]
    fn csv_has_runs_then_summaries() {
        let spec = parse_sweep(SPEC).unwrap();
        let res = run_sweep(&spec).unwrap();
        let csv = res.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 4 + 2 * 2);
        assert!(lines[0].starts_with("run_id,seed,independent_var,value,false_positive_rate,"));
        assert_eq!(lines[0].split(',').count(), 4 + MetricsReport::FIELDS.len());
        assert!(lines[5].starts_with("mean,,max_speed,5,"));
        assert!(lines[6].starts_with("stddev,,max_speed,5,"));
        assert_eq!(csv, run_sweep(&spec).unwrap().to_csv());
    }
}
