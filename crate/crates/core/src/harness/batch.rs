//! Many independent runs at once. Each run owns its world; nothing is shared
//! between runs, so results do not depend on how they are scheduled.

use thiserror::Error;

use super::metrics::{compute_metrics, MetricsError, MetricsReport};
use crate::sim::{self, ConfigInvalid, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigInvalid),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Runs one scenario and reduces its log to metrics.
pub fn evaluate(cfg: &ScenarioConfig) -> Result<MetricsReport, HarnessError> {
    let out = sim::run(cfg.clone())?;
    Ok(compute_metrics(&out.log)?)
}

fn check_all(cfgs: &[ScenarioConfig]) -> Result<(), HarnessError> {
    cfgs.iter()
        .try_for_each(|c| c.validate().map_err(HarnessError::from))
}

pub fn run_batch_sequential(cfgs: &[ScenarioConfig]) -> Result<Vec<MetricsReport>, HarnessError> {
    check_all(cfgs)?;
    cfgs.iter().map(evaluate).collect()
}

#[cfg(feature = "parallel")]
pub fn run_batch_parallel(cfgs: &[ScenarioConfig]) -> Result<Vec<MetricsReport>, HarnessError> {
    use rayon::prelude::*;
    check_all(cfgs)?;
    cfgs.par_iter().map(evaluate).collect()
}

/// Parallel when built with the `parallel` feature, sequential otherwise.
/// Output order always matches input order.
pub fn run_batch(cfgs: &[ScenarioConfig]) -> Result<Vec<MetricsReport>, HarnessError> {
    #[cfg(feature = "parallel")]
    {
        run_batch_parallel(cfgs)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_batch_sequential(cfgs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            duration_s: 60,
            node_count: 12,
            malicious_count: 2,
            flow_count: 4,
            rng_seed: seed,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn invalid_config_fails_before_running() {
        let mut bad = small(1);
        bad.node_count = 0;
        assert!(matches!(
            run_batch_sequential(&[small(2), bad]),
            Err(HarnessError::Config(_))
        ));
    }

    #[test]
    fn order_matches_input() {
        let cfgs: Vec<_> = (1..=3).map(small).collect();
        let got = run_batch(&cfgs).unwrap();
        let one_by_one: Vec<_> = cfgs.iter().map(|c| evaluate(c).unwrap()).collect();
        assert_eq!(got, one_by_one);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_equals_sequential() {
        let cfgs: Vec<_> = (4..=7).map(small).collect();
        assert_eq!(
            run_batch_parallel(&cfgs).unwrap(),
            run_batch_sequential(&cfgs).unwrap()
        );
    }
}
