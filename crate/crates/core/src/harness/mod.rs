//! Metrics, the local-detection baseline, scenario files and sweeps.

pub mod batch;
pub mod metrics;
pub mod plot;
pub mod scenario;
pub mod sweep;

#[cfg(feature = "parallel")]
pub use batch::run_batch_parallel;
pub use batch::{evaluate, run_batch, run_batch_sequential, HarnessError};
pub use metrics::{
    certificate_convergence, compute_metrics, loc_baseline, loc_baseline_with, CertConvergence,
    GroundTruth, LocAlarm, LocParams, MetricsError, MetricsReport,
};
pub use plot::sweep_svg;
pub use scenario::{parse_scenario, render_scenario, ScenarioError};
pub use sweep::{
    mean_stddev, parse_sweep, run_sweep, single_run_csv, Aggregate, RunRow, SeedPolicy, SweepError,
    SweepResult, SweepSpec, SweepVar,
};
