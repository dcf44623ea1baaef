//! Decision rules on photon counts.
//!
//! A [`DecisionRule`] assigns counts `>= threshold` to its bright state and
//! the rest to the other state, except for counts inside an optional discard
//! interval, which are dropped. Metrics are exact sums over the analytic pmfs.

use serde::{Deserialize, Serialize};

use crate::counting::{CountDistribution, StatePriors};
use crate::dwell::Window;
use crate::error::{domain, Error, Result};
use crate::State;

/// Treatment of counts at which both hypotheses are equally likely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiePolicy {
    /// Fair coin; contributes half of the tied mass to each outcome.
    #[default]
    HalfMass,
    AssignZero,
    AssignOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRule {
    pub threshold: usize,
    /// State assigned to counts at or above the threshold.
    pub bright: State,
    #[serde(default)]
    pub tie_policy: TiePolicy,
    /// Inclusive lower end of the discard interval (0 when absent).
    #[serde(default)]
    pub discard_lower: Option<usize>,
    /// Inclusive upper end of the discard interval (unbounded when absent).
    #[serde(default)]
    pub discard_upper: Option<usize>,
}

impl DecisionRule {
    pub fn new(threshold: usize, bright: State) -> Self {
        Self {
            threshold,
            bright,
            tie_policy: TiePolicy::HalfMass,
            discard_lower: None,
            discard_upper: None,
        }
    }

    /// Post-selection on `target`: every count that would be assigned to the
    /// other state is discarded.
    pub fn select(target: State, bright: State, threshold: usize) -> Self {
        let rule = Self::new(threshold, bright);
        if target == bright {
            if threshold == 0 {
                rule
            } else {
                Self { discard_lower: Some(0), discard_upper: Some(threshold - 1), ..rule }
            }
        } else {
            Self { discard_lower: Some(threshold), discard_upper: None, ..rule }
        }
    }

    pub fn with_discard(self, lower: Option<usize>, upper: Option<usize>) -> Result<Self> {
        if let (Some(lo), Some(hi)) = (lower, upper) {
            if lo > hi {
                return domain(format!("discard interval [{lo}, {hi}] is empty"));
            }
        }
        Ok(Self { discard_lower: lower, discard_upper: upper, ..self })
    }

    pub fn discards(&self, n: usize) -> bool {
        if self.discard_lower.is_none() && self.discard_upper.is_none() {
            return false;
        }
        let lo = self.discard_lower.unwrap_or(0);
        let hi = self.discard_upper.unwrap_or(usize::MAX);
        (lo..=hi).contains(&n)
    }

    /// State assigned to `n`, or `None` when discarded.
    pub fn assign(&self, n: usize) -> Option<State> {
        if self.discards(n) {
            None
        } else if n >= self.threshold {
            Some(self.bright)
        } else {
            Some(self.bright.other())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionMetrics {
    pub error_rate: f64,
    pub fidelity: f64,
    /// Fraction of shots not discarded.
    pub efficiency: f64,
    /// Probability that a shot is kept and assigned the target state.
    pub success_rate: f64,
    /// Fraction of kept shots assigned the wrong state, either way.
    pub misclassification: f64,
}

fn check_pair(a: &CountDistribution, b: &CountDistribution) -> Result<()> {
    if a.n_max() != b.n_max() {
        return Err(Error::Incompatible(format!("n_max {} vs {}", a.n_max(), b.n_max())));
    }
    if a.conditioning_time() != b.conditioning_time() {
        return Err(Error::Incompatible("different conditioning times".into()));
    }
    if a.conditioned_state() == b.conditioned_state() {
        return Err(Error::Incompatible("both distributions condition on the same state".into()));
    }
    Ok(())
}

fn ordered<'a>(
    dist0: &'a CountDistribution,
    dist1: &'a CountDistribution,
) -> Result<(&'a CountDistribution, &'a CountDistribution)> {
    check_pair(dist0, dist1)?;
    if dist0.conditioned_state() == State::Zero {
        Ok((dist0, dist1))
    } else {
        Ok((dist1, dist0))
    }
}

/// `p(n|0) / p(n|1)`, or `p0 p(n|0) / (p1 p(n|1))` when priors are given.
/// Infinite when only the denominator vanishes, 1 when both do.
pub fn likelihood_ratio(
    n: usize,
    dist0: &CountDistribution,
    dist1: &CountDistribution,
    priors: Option<&StatePriors>,
) -> Result<f64> {
    let (d0, d1) = ordered(dist0, dist1)?;
    let (w0, w1) = priors.map_or((1.0, 1.0), |p| (p.p0(), p.p1()));
    Ok(ratio(w0 * d0.at(n), w1 * d1.at(n)))
}

fn ratio(a: f64, b: f64) -> f64 {
    match (a == 0.0, b == 0.0) {
        (true, true) => 1.0,
        (false, true) => f64::INFINITY,
        _ => a / b,
    }
}

/// Outcome of the maximum-likelihood rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    State(State),
    /// Equal likelihoods under [`TiePolicy::HalfMass`].
    CoinFlip,
}

pub fn ml_decide(
    n: usize,
    dist0: &CountDistribution,
    dist1: &CountDistribution,
    priors: Option<&StatePriors>,
    tie: TiePolicy,
) -> Result<Decision> {
    let lr = likelihood_ratio(n, dist0, dist1, priors)?;
    Ok(if lr > 1.0 {
        Decision::State(State::Zero)
    } else if lr < 1.0 {
        Decision::State(State::One)
    } else {
        match tie {
            TiePolicy::HalfMass => Decision::CoinFlip,
            TiePolicy::AssignZero => Decision::State(State::Zero),
            TiePolicy::AssignOne => Decision::State(State::One),
        }
    })
}

/// First count at which the prior-weighted ML decision differs from its
/// decision at `n = 0`; `None` when the decision never changes.
pub fn ml_crossing(
    dist0: &CountDistribution,
    dist1: &CountDistribution,
    priors: Option<&StatePriors>,
) -> Result<Option<usize>> {
    let first = ml_decide(0, dist0, dist1, priors, TiePolicy::HalfMass)?;
    for n in 1..=dist0.n_max() {
        if ml_decide(n, dist0, dist1, priors, TiePolicy::HalfMass)? != first {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

/// Bayes error of the ML rule, `sum_n min(p0 p(n|0), p1 p(n|1))`. At exact
/// ties every policy contributes the same mass, so the result does not depend
/// on the tie policy.
pub fn error_rate_ml(
    dist0: &CountDistribution,
    dist1: &CountDistribution,
    priors: &StatePriors,
) -> Result<f64> {
    let (d0, d1) = ordered(dist0, dist1)?;
    Ok(bayes_error(d0.pmf(), d1.pmf(), priors.p0(), priors.p1()))
}

pub(crate) fn bayes_error(p0: &[f64], p1: &[f64], w0: f64, w1: f64) -> f64 {
    p0.iter().zip(p1).map(|(a, b)| (w0 * a).min(w1 * b)).sum()
}

/// Metrics for selecting `dist_target`'s state with `rule`. `priors` weight
/// the two states (index by state label, not by argument order).
pub fn threshold_metrics(
    rule: &DecisionRule,
    dist_target: &CountDistribution,
    dist_other: &CountDistribution,
    priors: &StatePriors,
) -> Result<DecisionMetrics> {
    check_pair(dist_target, dist_other)?;
    let target = dist_target.conditioned_state();
    let wt = priors.of(target);
    let wo = priors.of(target.other());
    let mut b = 0.0;
    let mut d = 0.0;
    let mut kept = 0.0;
    let mut wrong = 0.0;
    for n in 0..=dist_target.n_max() {
        let (pt, po) = (wt * dist_target.at(n), wo * dist_other.at(n));
        match rule.assign(n) {
            None => {}
            Some(s) => {
                kept += pt + po;
                if s == target {
                    b += pt;
                    d += po;
                    wrong += po;
                } else {
                    wrong += pt;
                }
            }
        }
    }
    if b + d <= 0.0 {
        return Err(Error::EmptyAcceptance);
    }
    let total = wt * dist_target.total_mass() + wo * dist_other.total_mass();
    Ok(DecisionMetrics {
        error_rate: d / (b + d),
        fidelity: b / (b + d),
        efficiency: (kept / total).min(1.0),
        success_rate: b + d,
        misclassification: wrong / kept,
    })
}

/// One point of an error-versus-efficiency curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: usize,
    pub efficiency: f64,
    pub error_rate: f64,
    pub fidelity: f64,
    pub success_rate: f64,
    /// Error with both states weighted equally.
    pub error_rate_unweighted: f64,
}

/// Post-selection of `target` on the bright side, swept over every threshold
/// whose accepted region still has mass. `bright` is the state with the larger
/// mean count.
pub fn postselection_curve(
    dist_target: &CountDistribution,
    dist_other: &CountDistribution,
    priors: &StatePriors,
) -> Result<Vec<CurvePoint>> {
    curve(dist_target, dist_other, priors, 0.0)
}

/// Baseline curve: post-selection on the initial-state distributions, with
/// fidelity multiplied by the probability `exp(-gamma T)` of no switch.
pub fn initial_estimate_with_survival(
    dist_target_initial: &CountDistribution,
    dist_other_initial: &CountDistribution,
    priors: &StatePriors,
    gamma: f64,
    window: &Window,
) -> Result<Vec<CurvePoint>> {
    if !(gamma.is_finite() && gamma >= 0.0) {
        return domain(format!("gamma must be finite and non-negative, got {gamma}"));
    }
    if dist_target_initial.conditioning_time() != crate::Conditioning::Start {
        return Err(Error::Incompatible("baseline needs initial-state distributions".into()));
    }
    curve(dist_target_initial, dist_other_initial, priors, gamma * window.duration())
}

fn curve(
    dist_target: &CountDistribution,
    dist_other: &CountDistribution,
    priors: &StatePriors,
    switch_exponent: f64,
) -> Result<Vec<CurvePoint>> {
    check_pair(dist_target, dist_other)?;
    let target = dist_target.conditioned_state();
    let (wt, wo) = (priors.of(target), priors.of(target.other()));
    let bright_is_target = dist_target.mean() >= dist_other.mean();
    let tail_t = side_masses(dist_target, bright_is_target);
    let tail_o = side_masses(dist_other, bright_is_target);
    // Probability of at least one switch, 1 - exp(-gamma T).
    let decay = -(-switch_exponent).exp_m1();
    let mut out = Vec::new();
    for th in 0..tail_t.len() {
        let (bt, bo) = (tail_t[th], tail_o[th]);
        let (b, d) = (wt * bt, wo * bo);
        if b + d <= 0.0 {
            continue;
        }
        // 1 - F exp(-gamma T) written so that tiny errors keep their precision.
        let error = (d + b * decay) / (b + d);
        let error_unweighted = if bt + bo > 0.0 { (bo + bt * decay) / (bt + bo) } else { 1.0 };
        out.push(CurvePoint {
            threshold: th,
            efficiency: b + d,
            error_rate: error,
            fidelity: 1.0 - error,
            success_rate: b + d,
            error_rate_unweighted: error_unweighted,
        });
    }
    Ok(out)
}

// Mass accepted by a selection at each threshold: P(n >= th) on the bright
// side, P(n < th) on the dark side.
fn side_masses(d: &CountDistribution, bright: bool) -> Vec<f64> {
    let tails = d.upper_tails();
    if bright {
        tails
    } else {
        let mut heads = vec![0.0; tails.len()];
        for n in 1..heads.len() {
            heads[n] = heads[n - 1] + d.at(n - 1);
        }
        heads
    }
}
