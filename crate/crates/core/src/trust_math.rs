//! Trust arithmetic: classification bands, majority partition, group trust
//! and the cumulative trust update with its weighting factors.
//!
//! Every function here is pure. Results that represent a trust value or a
//! weighting factor are clamped to `[0, 1]` after the formula is evaluated
//! exactly as written; the `*_raw` variants expose the pre-clamp values.

use thiserror::Error;

use crate::messages::NodeId;

/// Upper bound (exclusive) of the malicious band.
pub const MALICIOUS_BELOW: f64 = 0.4;
/// Lower bound (exclusive) of the trusted band.
pub const TRUSTED_ABOVE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrustError {
    #[error("observation set is empty")]
    EmptyObservationSet,
    #[error("network size factor W must be positive, got {0}")]
    NonPositiveW(f64),
    #[error("certificate repeat count k must be at least 1, got {0}")]
    InvalidK(u32),
    #[error("factor {name} = {value} is outside [0, 1]")]
    OutOfRangeFactor { name: &'static str, value: f64 },
    #[error("{name} = {value} must be non-negative")]
    Negative { name: &'static str, value: f64 },
}

/// A trust value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct TrustValue(f64);

impl TrustValue {
    pub const ZERO: TrustValue = TrustValue(0.0);
    pub const ONE: TrustValue = TrustValue(1.0);

    /// Clamps `value` into `[0, 1]`. NaN maps to 0.
    pub fn new(value: f64) -> Self {
        TrustValue(clamp_unit(value))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn class(self) -> TrustClass {
        classify_trust(self)
    }
}

impl From<TrustValue> for f64 {
    fn from(t: TrustValue) -> f64 {
        t.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrustClass {
    Malicious,
    Suspected,
    Trusted,
}

/// One respondent's report about an accused node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaliciousnessObservation {
    pub respondent: NodeId,
    /// Fraction of monitored packets dropped or modified.
    pub maliciousness: f64,
    pub weight: f64,
    /// The evaluating node's trust in the respondent.
    pub respondent_trust: f64,
}

impl MaliciousnessObservation {
    pub fn new(respondent: NodeId, maliciousness: f64) -> Self {
        MaliciousnessObservation {
            respondent,
            maliciousness,
            weight: 1.0,
            respondent_trust: 1.0,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_trust(mut self, trust: f64) -> Self {
        self.respondent_trust = trust;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MajorityPartition {
    pub majority: Vec<MaliciousnessObservation>,
    pub minority: Vec<MaliciousnessObservation>,
    /// True when the majority is the group at or above the threshold.
    pub adverse: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupTrustResult {
    pub group_trust: TrustValue,
    pub majority: Vec<NodeId>,
    pub minority: Vec<NodeId>,
    pub adverse: bool,
}

/// Weights and thresholds of the trust update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateParams {
    /// Weight of the old trust value.
    pub alpha: f64,
    /// Weight given to a freshly computed group trust.
    pub alpha2: f64,
    /// Replenishment applied per interval (or per certificate).
    pub delta: f64,
    /// Normalizer for the respondent-weight sum. `None` means "sum of all
    /// respondent weights in the certificate".
    pub w: Option<f64>,
    pub maliciousness_threshold: f64,
}

impl Default for UpdateParams {
    fn default() -> Self {
        UpdateParams {
            alpha: 0.6,
            alpha2: 0.8,
            delta: 0.001,
            w: None,
            maliciousness_threshold: 0.5,
        }
    }
}

impl UpdateParams {
    pub fn validate(&self) -> Result<(), TrustError> {
        check_unit("alpha", self.alpha)?;
        check_unit("alpha2", self.alpha2)?;
        check_unit("maliciousness_threshold", self.maliciousness_threshold)?;
        check_non_negative("delta", self.delta)?;
        if let Some(w) = self.w {
            if w.is_nan() || w <= 0.0 {
                return Err(TrustError::NonPositiveW(w));
            }
        }
        Ok(())
    }
}

pub fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

fn check_unit(name: &'static str, value: f64) -> Result<(), TrustError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(TrustError::OutOfRangeFactor { name, value })
    }
}

fn check_non_negative(name: &'static str, value: f64) -> Result<(), TrustError> {
    if value >= 0.0 {
        Ok(())
    } else {
        Err(TrustError::Negative { name, value })
    }
}

/// `[0, 0.4)` malicious, `[0.4, 0.9]` suspected, `(0.9, 1]` trusted.
pub fn classify_trust(t: TrustValue) -> TrustClass {
    let v = t.get();
    if v < MALICIOUS_BELOW {
        TrustClass::Malicious
    } else if v <= TRUSTED_ABOVE {
        TrustClass::Suspected
    } else {
        TrustClass::Trusted
    }
}

/// Splits respondents at `threshold` and picks the larger group. On a tie the
/// below-threshold group wins. Both groups come back sorted by respondent id.
pub fn partition_majority(
    obs: &[MaliciousnessObservation],
    threshold: f64,
) -> Result<MajorityPartition, TrustError> {
    if obs.is_empty() {
        return Err(TrustError::EmptyObservationSet);
    }
    let mut sorted = obs.to_vec();
    sorted.sort_by_key(|o| o.respondent);
    let (above, below): (Vec<_>, Vec<_>) = sorted
        .into_iter()
        .partition(|o| o.maliciousness >= threshold);
    if above.len() > below.len() {
        Ok(MajorityPartition {
            majority: above,
            minority: below,
            adverse: true,
        })
    } else {
        Ok(MajorityPartition {
            majority: below,
            minority: above,
            adverse: false,
        })
    }
}

/// `1 - mean(maliciousness over the majority)`, before clamping.
pub fn group_trust_raw(
    obs: &[MaliciousnessObservation],
    threshold: f64,
) -> Result<f64, TrustError> {
    let part = partition_majority(obs, threshold)?;
    Ok(1.0 - mean_maliciousness(&part.majority))
}

pub fn group_trust(
    obs: &[MaliciousnessObservation],
    threshold: f64,
) -> Result<GroupTrustResult, TrustError> {
    let part = partition_majority(obs, threshold)?;
    let raw = 1.0 - mean_maliciousness(&part.majority);
    Ok(GroupTrustResult {
        group_trust: TrustValue::new(raw),
        majority: part.majority.iter().map(|o| o.respondent).collect(),
        minority: part.minority.iter().map(|o| o.respondent).collect(),
        adverse: part.adverse,
    })
}

fn mean_maliciousness(group: &[MaliciousnessObservation]) -> f64 {
    let sum: f64 = group.iter().map(|o| o.maliciousness).sum();
    sum / group.len() as f64
}

/// Weighted trust of the majority, `sum(w_i * t_i) / W`, before clamping.
pub fn alpha1_raw(majority: &[MaliciousnessObservation], w: f64) -> Result<f64, TrustError> {
    if w.is_nan() || w <= 0.0 {
        return Err(TrustError::NonPositiveW(w));
    }
    let sum: f64 = majority.iter().map(|o| o.weight * o.respondent_trust).sum();
    Ok(sum / w)
}

pub fn alpha1(majority: &[MaliciousnessObservation], w: f64) -> Result<f64, TrustError> {
    alpha1_raw(majority, w).map(clamp_unit)
}

/// 1 for the first certificate from a respondent set, 0 for any repeat.
pub fn alpha3(k: u32) -> Result<f64, TrustError> {
    match k {
        0 => Err(TrustError::InvalidK(k)),
        1 => Ok(1.0),
        _ => Ok(0.0),
    }
}

pub fn beta(a1: f64, a2: f64, a3: f64) -> Result<f64, TrustError> {
    check_unit("alpha1", a1)?;
    check_unit("alpha2", a2)?;
    check_unit("alpha3", a3)?;
    Ok(a1 * a2 * a3)
}

/// `1 - [alpha (1 - t_old) + beta (1 - t_cert) - delta]`, before clamping.
pub fn update_trust_raw(t_old: f64, t_cert: f64, alpha: f64, beta: f64, delta: f64) -> f64 {
    1.0 - (alpha * (1.0 - t_old) + beta * (1.0 - t_cert) - delta)
}

pub fn update_trust(
    t_old: TrustValue,
    t_cert: TrustValue,
    alpha: f64,
    beta: f64,
    delta: f64,
) -> Result<TrustValue, TrustError> {
    check_unit("alpha", alpha)?;
    check_unit("beta", beta)?;
    check_non_negative("delta", delta)?;
    Ok(TrustValue::new(update_trust_raw(
        t_old.get(),
        t_cert.get(),
        alpha,
        beta,
        delta,
    )))
}

pub fn replenish(t_old: TrustValue, delta: f64) -> Result<TrustValue, TrustError> {
    check_non_negative("delta", delta)?;
    Ok(TrustValue::new(t_old.get() + delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obs(id: u32, m: f64) -> MaliciousnessObservation {
        MaliciousnessObservation::new(NodeId(id), m)
    }

    #[test]
    fn classification_bands() {
        assert_eq!(classify_trust(TrustValue::new(0.3)), TrustClass::Malicious);
        assert_eq!(classify_trust(TrustValue::new(0.95)), TrustClass::Trusted);
        assert_eq!(classify_trust(TrustValue::new(0.4)), TrustClass::Suspected);
        assert_eq!(classify_trust(TrustValue::new(0.9)), TrustClass::Suspected);
        assert_eq!(classify_trust(TrustValue::new(0.0)), TrustClass::Malicious);
        assert_eq!(classify_trust(TrustValue::new(1.0)), TrustClass::Trusted);
    }

    #[test]
    fn majority_by_size() {
        let o = [
            obs(1, 0.1),
            obs(2, 0.2),
            obs(3, 0.3),
            obs(4, 0.7),
            obs(5, 0.9),
        ];
        let p = partition_majority(&o, 0.5).unwrap();
        let ids: Vec<_> = p.majority.iter().map(|o| o.respondent.0).collect();
        assert_eq!(ids, vec![1, 2, 3]);
        assert!(!p.adverse);
    }

    #[test]
    fn tie_goes_to_below_threshold_group() {
        let o = [obs(4, 0.8), obs(1, 0.1), obs(3, 0.6), obs(2, 0.4)];
        let p = partition_majority(&o, 0.5).unwrap();
        let ids: Vec<_> = p.majority.iter().map(|o| o.respondent.0).collect();
        assert_eq!(ids, vec![1, 2]);
        assert!(!p.adverse);
    }

    #[test]
    fn single_adverse_observation_is_the_majority() {
        let p = partition_majority(&[obs(9, 0.9)], 0.5).unwrap();
        assert_eq!(p.majority.len(), 1);
        assert!(p.adverse);
        assert!(p.minority.is_empty());
    }

    #[test]
    fn empty_observations_rejected() {
        assert_eq!(
            partition_majority(&[], 0.5),
            Err(TrustError::EmptyObservationSet)
        );
        assert_eq!(group_trust(&[], 0.5), Err(TrustError::EmptyObservationSet));
    }

    #[test]
    fn group_trust_examples() {
        let zero = [obs(1, 0.0), obs(2, 0.0), obs(3, 0.0)];
        assert_eq!(group_trust(&zero, 0.5).unwrap().group_trust.get(), 1.0);
        assert_eq!(
            group_trust(&[obs(1, 1.0)], 0.5).unwrap().group_trust.get(),
            0.0
        );
        let g = group_trust(&[obs(1, 0.2), obs(2, 0.4)], 0.5).unwrap();
        assert!((g.group_trust.get() - 0.7).abs() < 1e-12);
        assert_eq!(g.majority, vec![NodeId(1), NodeId(2)]);
    }

    #[test]
    fn alpha1_examples() {
        assert_eq!(alpha1(&[obs(1, 1.0)], 1.0).unwrap(), 1.0);
        assert_eq!(alpha1(&[], 1.0).unwrap(), 0.0);
        let m = [obs(1, 0.9).with_trust(0.8), obs(2, 0.9).with_trust(0.6)];
        assert!((alpha1(&m, 2.0).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(alpha1(&m, 0.0), Err(TrustError::NonPositiveW(0.0)));
        assert!(matches!(alpha1(&m, -1.0), Err(TrustError::NonPositiveW(_))));
    }

    #[test]
    fn alpha3_examples() {
        assert_eq!(alpha3(1).unwrap(), 1.0);
        assert_eq!(alpha3(2).unwrap(), 0.0);
        assert_eq!(alpha3(10).unwrap(), 0.0);
        assert_eq!(alpha3(0), Err(TrustError::InvalidK(0)));
    }

    #[test]
    fn beta_examples() {
        assert_eq!(beta(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert!((beta(0.7, 0.5, 1.0).unwrap() - 0.35).abs() < 1e-12);
        assert_eq!(beta(0.7, 0.5, 0.0).unwrap(), 0.0);
        assert!(matches!(
            beta(1.2, 0.5, 1.0),
            Err(TrustError::OutOfRangeFactor { name: "alpha1", .. })
        ));
    }

    #[test]
    fn update_trust_examples() {
        let t = |v| TrustValue::new(v);
        let keep = update_trust(t(0.6), t(0.123), 1.0, 0.0, 0.0).unwrap();
        assert!((keep.get() - 0.6).abs() < 1e-12);
        let take = update_trust(t(0.77), t(0.2), 0.0, 1.0, 0.0).unwrap();
        assert!((take.get() - 0.2).abs() < 1e-12);
        let mixed = update_trust(t(0.8), t(0.4), 0.5, 0.35, 0.02).unwrap();
        assert!((mixed.get() - 0.71).abs() < 1e-12);
        // First adverse certificate with the default weights.
        let first = update_trust(t(1.0), t(0.0), 0.6, 0.8, 0.0).unwrap();
        assert!((first.get() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn replenish_examples() {
        assert_eq!(replenish(TrustValue::ONE, 0.01).unwrap().get(), 1.0);
        assert_eq!(replenish(TrustValue::new(0.5), 0.0).unwrap().get(), 0.5);
        assert!((replenish(TrustValue::new(0.38), 0.05).unwrap().get() - 0.43).abs() < 1e-12);
        assert!(replenish(TrustValue::new(0.38), -0.1).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(UpdateParams::default().validate().is_ok());
        let bad = UpdateParams {
            alpha: 1.5,
            ..UpdateParams::default()
        };
        assert!(bad.validate().is_err());
        let bad_w = UpdateParams {
            w: Some(0.0),
            ..UpdateParams::default()
        };
        assert!(bad_w.validate().is_err());
    }

    fn arb_obs(max: usize) -> impl Strategy<Value = Vec<MaliciousnessObservation>> {
        prop::collection::vec(0.0f64..=1.0, 1..=max).prop_map(|ms| {
            ms.into_iter()
                .enumerate()
                .map(|(i, m)| obs(i as u32 + 1, m))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn outputs_stay_in_unit_interval(
            t_old in 0.0f64..=1.0, t_cert in 0.0f64..=1.0,
            alpha in 0.0f64..=1.0, b in 0.0f64..=1.0, delta in 0.0f64..=0.5,
        ) {
            let v = update_trust(TrustValue::new(t_old), TrustValue::new(t_cert), alpha, b, delta).unwrap();
            prop_assert!((0.0..=1.0).contains(&v.get()));
            let r = replenish(TrustValue::new(t_old), delta).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.get()));
        }

        #[test]
        fn update_is_monotone(
            a in 0.0f64..=1.0, b in 0.0f64..=1.0, c in 0.0f64..=1.0, d in 0.0f64..=1.0,
            alpha in 0.0f64..=1.0, bt in 0.0f64..=1.0, delta in 0.0f64..=0.1,
        ) {
            let (lo_old, hi_old) = if a <= b { (a, b) } else { (b, a) };
            let (lo_cert, hi_cert) = if c <= d { (c, d) } else { (d, c) };
            prop_assert!(update_trust_raw(lo_old, c, alpha, bt, delta) <= update_trust_raw(hi_old, c, alpha, bt, delta));
            prop_assert!(update_trust_raw(a, lo_cert, alpha, bt, delta) <= update_trust_raw(a, hi_cert, alpha, bt, delta));
            let t = TrustValue::new;
            prop_assert!(update_trust(t(lo_old), t(c), alpha, bt, delta).unwrap() <= update_trust(t(hi_old), t(c), alpha, bt, delta).unwrap());
            prop_assert!(update_trust(t(a), t(lo_cert), alpha, bt, delta).unwrap() <= update_trust(t(a), t(hi_cert), alpha, bt, delta).unwrap());
        }

        #[test]
        fn partition_is_permutation_invariant(o in arb_obs(10), seed in any::<u64>(), thr in 0.0f64..=1.0) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = o.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(partition_majority(&o, thr).unwrap(), partition_majority(&shuffled, thr).unwrap());
            prop_assert_eq!(group_trust(&o, thr).unwrap(), group_trust(&shuffled, thr).unwrap());
        }

        #[test]
        fn partition_covers_respondents(o in arb_obs(10), thr in 0.0f64..=1.0) {
            let g = group_trust(&o, thr).unwrap();
            prop_assert!(g.majority.len() >= g.minority.len());
            prop_assert_eq!(g.majority.len() + g.minority.len(), o.len());
            let mut all: Vec<_> = g.majority.iter().chain(&g.minority).copied().collect();
            all.sort();
            all.dedup();
            prop_assert_eq!(all.len(), o.len());
        }

        #[test]
        fn alpha3_is_idempotent(k in 1u32..1000) {
            let a = alpha3(k).unwrap();
            prop_assert_eq!(a * a, a);
        }

        #[test]
        fn classification_is_total(v in 0.0f64..=1.0) {
            let c = classify_trust(TrustValue::new(v));
            let expect = if v < 0.4 { TrustClass::Malicious } else if v <= 0.9 { TrustClass::Suspected } else { TrustClass::Trusted };
            prop_assert_eq!(c, expect);
        }
    }
}
