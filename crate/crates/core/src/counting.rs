//! Photon-count distributions conditioned on the state at the start or the
//! end of the measurement window.
//!
//! Counts are Poisson with mean `lambda_0 tau + lambda_1 (T - tau)`, mixed
//! over the dwell-time density. The tau-integral runs once per parameter set
//! on a shared quadrature grid; each node contributes its Poisson kernel to
//! all four parity-resolved components at the same time.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::dwell::{parity_density, SwitchingRates, Window};
use crate::error::{domain, Error, Result};
use crate::quadrature::{converge, TauGrid};
use crate::{Parity, State};

/// Tolerance on the total mass of a truncated distribution.
pub const NORMALIZATION_TOL: f64 = 1e-6;
/// Upper bound on the Poisson tail beyond `n_max`.
pub const TAIL_BOUND: f64 = 1e-8;

/// Mean detected photon rates (Hz) in `|0>` and `|1>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEmission", into = "RawEmission")]
pub struct EmissionRates {
    lambda_0: f64,
    lambda_1: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEmission {
    lambda_0: f64,
    lambda_1: f64,
}

impl TryFrom<RawEmission> for EmissionRates {
    type Error = Error;
    fn try_from(r: RawEmission) -> Result<Self> {
        Self::new(r.lambda_0, r.lambda_1)
    }
}

impl From<EmissionRates> for RawEmission {
    fn from(e: EmissionRates) -> Self {
        Self { lambda_0: e.lambda_0, lambda_1: e.lambda_1 }
    }
}

impl EmissionRates {
    pub fn new(lambda_0: f64, lambda_1: f64) -> Result<Self> {
        for (name, v) in [("lambda_0", lambda_0), ("lambda_1", lambda_1)] {
            if !(v.is_finite() && v >= 0.0) {
                return domain(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        Ok(Self { lambda_0, lambda_1 })
    }

    pub fn lambda_0(&self) -> f64 {
        self.lambda_0
    }

    pub fn lambda_1(&self) -> f64 {
        self.lambda_1
    }

    pub fn in_state(&self, s: State) -> f64 {
        match s {
            State::Zero => self.lambda_0,
            State::One => self.lambda_1,
        }
    }

    /// Poisson mean for `tau` seconds in `|0>` out of `t`.
    pub fn mean_count(&self, tau: f64, t: f64) -> f64 {
        self.lambda_0 * tau + self.lambda_1 * (t - tau).max(0.0)
    }
}

/// Probability of `|0>` at the conditioning time; `p1 = 1 - p0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPriors", into = "RawPriors")]
pub struct StatePriors {
    p0: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPriors {
    p0: f64,
}

impl TryFrom<RawPriors> for StatePriors {
    type Error = Error;
    fn try_from(r: RawPriors) -> Result<Self> {
        Self::new(r.p0)
    }
}

impl From<StatePriors> for RawPriors {
    fn from(p: StatePriors) -> Self {
        Self { p0: p.p0 }
    }
}

impl StatePriors {
    pub fn new(p0: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p0) {
            return domain(format!("p0 must lie in [0, 1], got {p0}"));
        }
        Ok(Self { p0 })
    }

    pub fn uniform() -> Self {
        Self { p0: 0.5 }
    }

    /// All mass on `s`.
    pub fn certain(s: State) -> Self {
        Self { p0: if s == State::Zero { 1.0 } else { 0.0 } }
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn p1(&self) -> f64 {
        1.0 - self.p0
    }

    pub fn of(&self, s: State) -> f64 {
        match s {
            State::Zero => self.p0,
            State::One => self.p1(),
        }
    }

    pub fn swapped(&self) -> Self {
        Self { p0: self.p1() }
    }
}

/// Stationary occupation of the telegraph process.
pub fn steady_state_priors(rates: &SwitchingRates) -> Result<StatePriors> {
    let total = rates.gamma_0() + rates.gamma_1();
    if total <= 0.0 {
        return Err(Error::DegeneratePriors);
    }
    StatePriors::new(rates.gamma_1() / total)
}

/// One-directional decay of the `|0>` population: `p0(t) = p0 exp(-gamma t)`.
pub fn decayed_priors(initial: &StatePriors, gamma: f64, t: f64) -> Result<StatePriors> {
    if !(t.is_finite() && t >= 0.0) {
        return domain(format!("t must be finite and non-negative, got {t}"));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return domain(format!("gamma must be finite and non-negative, got {gamma}"));
    }
    StatePriors::new(initial.p0 * (-gamma * t).exp())
}

/// `exp(-mean) mean^n / n!`, evaluated in log space.
pub fn poisson_pmf(n: u64, mean: f64) -> Result<f64> {
    if !(mean.is_finite() && mean >= 0.0) {
        return domain(format!("Poisson mean must be finite and non-negative, got {mean}"));
    }
    Ok(poisson_pmf_unchecked(n, mean))
}

fn poisson_pmf_unchecked(n: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    (nf * mean.ln() - mean - ln_gamma(nf + 1.0)).exp()
}

/// Calls `f(n, pmf)` for every `n <= n_max` at which the Poisson pmf with the
/// given mean is representable, walking outward from the mode by recurrence.
pub(crate) fn for_each_poisson(mean: f64, n_max: usize, mut f: impl FnMut(usize, f64)) {
    if mean == 0.0 {
        f(0, 1.0);
        return;
    }
    const FLOOR: f64 = 1e-300;
    let mode = (mean.floor() as usize).min(n_max);
    let start = poisson_pmf_unchecked(mode as u64, mean);
    if start < FLOOR {
        return;
    }
    f(mode, start);
    let mut p = start;
    for n in (0..mode).rev() {
        p *= (n + 1) as f64 / mean;
        if p < FLOOR {
            break;
        }
        f(n, p);
    }
    p = start;
    for n in mode + 1..=n_max {
        p *= mean / n as f64;
        if p < FLOOR {
            break;
        }
        f(n, p);
    }
}

/// Truncation bound: `ceil(mu + 10 sqrt(mu))` with `mu = max(lambda) T`,
/// raised until the Poisson tail beyond it is below [`TAIL_BOUND`].
pub fn n_max_for(emission: &EmissionRates, window: &Window) -> usize {
    let mu = emission.lambda_0.max(emission.lambda_1) * window.duration();
    let mut n = (mu + 10.0 * mu.sqrt()).ceil() as usize;
    if mu == 0.0 {
        return n;
    }
    loop {
        // Tail mass above n, summed by recurrence from n + 1.
        let mut p = poisson_pmf_unchecked(n as u64 + 1, mu);
        let mut tail = 0.0;
        let mut k = n + 1;
        while p > 0.0 && p > tail * 1e-17 {
            tail += p;
            k += 1;
            p *= mu / k as f64;
        }
        if tail < TAIL_BOUND {
            return n;
        }
        n += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// State at `t = 0`.
    Start,
    /// State at `t = T`.
    End,
}

/// Parameters a distribution was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub rates: SwitchingRates,
    pub emission: EmissionRates,
    pub window: Window,
    /// Priors at `t = 0`, when the distribution depends on them.
    pub priors: Option<StatePriors>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditioningInfo {
    pub time: Conditioning,
    pub state: State,
}

/// Normalised photon-count pmf over `n = 0..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountDistribution {
    params: Provenance,
    conditioning: ConditioningInfo,
    pmf: Vec<f64>,
}

impl CountDistribution {
    pub fn new(
        pmf: Vec<f64>,
        conditioning: Conditioning,
        state: State,
        params: Provenance,
    ) -> Result<Self> {
        if pmf.is_empty() || pmf.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return domain("pmf entries must be finite and non-negative");
        }
        let mass: f64 = pmf.iter().sum();
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Normalization { mass });
        }
        Ok(Self { params, conditioning: ConditioningInfo { time: conditioning, state }, pmf })
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// pmf at `n`, zero beyond the truncation bound.
    pub fn at(&self, n: usize) -> f64 {
        self.pmf.get(n).copied().unwrap_or(0.0)
    }

    pub fn n_max(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn conditioning_time(&self) -> Conditioning {
        self.conditioning.time
    }

    pub fn conditioned_state(&self) -> State {
        self.conditioning.state
    }

    pub fn params(&self) -> &Provenance {
        &self.params
    }

    pub fn total_mass(&self) -> f64 {
        self.pmf.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    /// `P(count >= n)` for every `n`, accumulated from the top so that small
    /// tails keep their relative precision. Has `n_max + 2` entries.
    pub fn upper_tails(&self) -> Vec<f64> {
        let mut tails = vec![0.0; self.pmf.len() + 1];
        for n in (0..self.pmf.len()).rev() {
            tails[n] = tails[n + 1] + self.pmf[n];
        }
        tails
    }
}

/// Joint count distributions `p(count ∩ parity | initial)` for both initial
/// states and both parities, plus the parity probabilities, on one grid.
#[derive(Debug, Clone)]
pub struct ConditionalCounts {
    rates: SwitchingRates,
    emission: EmissionRates,
    window: Window,
    // [initial][parity], parity index 0 = even, 1 = odd
    joint: [[Vec<f64>; 2]; 2],
    parity_prob: [[f64; 2]; 2],
}

fn parity_index(p: Parity) -> usize {
    match p {
        Parity::Even => 0,
        Parity::Odd => 1,
    }
}

struct Mixture<const K: usize> {
    comps: [Vec<f64>; K],
    // Integral of each component's density weight over the grid.
    weight_mass: [f64; K],
}

/// Integrates `density(tau)[k] * Poisson(n; mu(tau))` over the window for all
/// `n <= n_max`, adds `points` as `(component, mass, mean)` Poisson atoms,
/// and refines the grid until every component converges in L1.
fn poisson_mixtures<const K: usize>(
    window: &Window,
    grading: &SwitchingRates,
    n_max: usize,
    mu: impl Fn(f64) -> f64,
    density: impl Fn(f64) -> [f64; K],
    points: &[(usize, f64, f64)],
) -> Result<Mixture<K>> {
    let eval = |level: u32| -> Result<(Mixture<K>, usize)> {
        let grid = TauGrid::new(window, grading, level);
        let mut comps: [Vec<f64>; K] = std::array::from_fn(|_| vec![0.0; n_max + 1]);
        let mut weight_mass = [0.0; K];
        for (&x, &w) in grid.nodes().iter().zip(grid.weights()) {
            let d = density(x);
            let wd: [f64; K] = std::array::from_fn(|k| w * d[k]);
            if wd.iter().all(|v| *v == 0.0) {
                continue;
            }
            for k in 0..K {
                weight_mass[k] += wd[k];
            }
            for_each_poisson(mu(x), n_max, |n, p| {
                for k in 0..K {
                    comps[k][n] += wd[k] * p;
                }
            });
        }
        for &(k, mass, mean) in points {
            if mass > 0.0 {
                for_each_poisson(mean, n_max, |n, p| comps[k][n] += mass * p);
            }
        }
        Ok((Mixture { comps, weight_mass }, grid.len()))
    };
    converge(eval, |a, b| {
        (0..K)
            .map(|k| {
                let diff: f64 = a.comps[k].iter().zip(&b.comps[k]).map(|(x, y)| (x - y).abs()).sum();
                let mass: f64 = b.comps[k].iter().sum();
                if mass > 1e-12 {
                    diff / mass
                } else {
                    diff
                }
            })
            .fold(0.0, f64::max)
    })
}

impl ConditionalCounts {
    pub fn compute(
        rates: &SwitchingRates,
        emission: &EmissionRates,
        window: &Window,
    ) -> Result<Self> {
        let t = window.duration();
        let n_max = n_max_for(emission, window);
        let density = |x: f64| {
            [
                parity_density(Parity::Even, State::Zero, rates, t, x),
                parity_density(Parity::Odd, State::Zero, rates, t, x),
                parity_density(Parity::Even, State::One, rates, t, x),
                parity_density(Parity::Odd, State::One, rates, t, x),
            ]
        };
        let stay0 = (-rates.gamma_0() * t).exp();
        let stay1 = (-rates.gamma_1() * t).exp();
        let points = [
            (0, stay0, emission.lambda_0 * t),
            (2, stay1, emission.lambda_1 * t),
        ];
        let mix = poisson_mixtures(
            window,
            rates,
            n_max,
            |x| emission.mean_count(x, t),
            density,
            &points,
        )?;
        let even0 = (mix.weight_mass[0] + stay0).min(1.0);
        let even1 = (mix.weight_mass[2] + stay1).min(1.0);
        let [e0, o0, e1, o1] = mix.comps;
        Ok(Self {
            rates: *rates,
            emission: *emission,
            window: *window,
            joint: [[e0, o0], [e1, o1]],
            parity_prob: [[even0, 1.0 - even0], [even1, 1.0 - even1]],
        })
    }

    pub fn n_max(&self) -> usize {
        self.joint[0][0].len() - 1
    }

    /// `p(count ∩ parity | initial)` over all counts.
    pub fn joint(&self, initial: State, parity: Parity) -> &[f64] {
        &self.joint[initial.index()][parity_index(parity)]
    }

    pub fn parity_probability(&self, initial: State, parity: Parity) -> f64 {
        self.parity_prob[initial.index()][parity_index(parity)]
    }

    /// Probability of ending in `state` given priors at `t = 0`.
    pub fn final_state_probability(&self, state: State, priors: &StatePriors) -> f64 {
        State::ALL
            .iter()
            .map(|&i| priors.of(i) * self.parity_probability(i, Parity::between(i, state)))
            .sum()
    }

    /// Priors describing the state at `t = T`.
    pub fn final_priors(&self, priors: &StatePriors) -> Result<StatePriors> {
        let p0 = self.final_state_probability(State::Zero, priors);
        let p1 = self.final_state_probability(State::One, priors);
        StatePriors::new((p0 / (p0 + p1)).clamp(0.0, 1.0))
    }

    fn provenance(&self, priors: Option<StatePriors>) -> Provenance {
        Provenance { rates: self.rates, emission: self.emission, window: self.window, priors }
    }

    pub fn given_initial(&self, state: State) -> Result<CountDistribution> {
        let [even, odd] = &self.joint[state.index()];
        let pmf = even.iter().zip(odd).map(|(a, b)| a + b).collect();
        CountDistribution::new(pmf, Conditioning::Start, state, self.provenance(None))
    }

    pub fn given_final(&self, state: State, priors: &StatePriors) -> Result<CountDistribution> {
        let den = self.final_state_probability(state, priors);
        if den < 1e-300 {
            return Err(Error::UnreachableState(state));
        }
        let mut pmf = vec![0.0; self.n_max() + 1];
        for i in State::ALL {
            let w = priors.of(i);
            if w == 0.0 {
                continue;
            }
            let joint = self.joint(i, Parity::between(i, state));
            for (acc, v) in pmf.iter_mut().zip(joint) {
                *acc += w * v;
            }
        }
        pmf.iter_mut().for_each(|v| *v /= den);
        CountDistribution::new(pmf, Conditioning::End, state, self.provenance(Some(*priors)))
    }

    pub fn conditioned(
        &self,
        time: Conditioning,
        state: State,
        priors: &StatePriors,
    ) -> Result<CountDistribution> {
        match time {
            Conditioning::Start => self.given_initial(state),
            Conditioning::End => self.given_final(state, priors),
        }
    }
}

/// Count pmf given the state at `t = 0`.
pub fn count_pmf_given_initial(
    state: State,
    rates: &SwitchingRates,
    emission: &EmissionRates,
    window: &Window,
) -> Result<CountDistribution> {
    ConditionalCounts::compute(rates, emission, window)?.given_initial(state)
}

/// Count pmf given the state at `t = T`, for priors describing `t = 0`.
pub fn count_pmf_given_final(
    state: State,
    rates: &SwitchingRates,
    emission: &EmissionRates,
    window: &Window,
    priors: &StatePriors,
) -> Result<CountDistribution> {
    ConditionalCounts::compute(rates, emission, window)?.given_final(state, priors)
}

/// The four closed forms valid when `|1>` is never left (`gamma_1 = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElectronPdf {
    InitialZero,
    InitialOne,
    FinalZero,
    FinalOne,
}

/// Simplified count pmfs for one-directional decay `|0> -> |1>` at rate
/// `gamma`. `InitialZero` includes the survival term
/// `exp(-gamma T) Poisson(lambda_0 T)`; `FinalOne` is normalised by the
/// probability of ending in `|1>`.
pub fn count_pmf_electron_simplified(
    which: ElectronPdf,
    gamma: f64,
    emission: &EmissionRates,
    window: &Window,
    priors: &StatePriors,
) -> Result<CountDistribution> {
    let rates = SwitchingRates::new(gamma, 0.0)?;
    let t = window.duration();
    let n_max = n_max_for(emission, window);
    let params = Provenance { rates, emission: *emission, window: *window, priors: None };
    let pure = |mean: f64| {
        let mut pmf = vec![0.0; n_max + 1];
        for_each_poisson(mean, n_max, |n, p| pmf[n] = p);
        pmf
    };
    let survive = (-gamma * t).exp();
    let decayed = || -> Result<Vec<f64>> {
        let mix = poisson_mixtures(
            window,
            &rates,
            n_max,
            |x| emission.mean_count(x, t),
            |x| [gamma * (-gamma * x).exp()],
            &[(0, survive, emission.lambda_0 * t)],
        )?;
        let [c] = mix.comps;
        Ok(c)
    };
    match which {
        ElectronPdf::InitialZero => {
            CountDistribution::new(decayed()?, Conditioning::Start, State::Zero, params)
        }
        ElectronPdf::InitialOne => {
            CountDistribution::new(pure(emission.lambda_1 * t), Conditioning::Start, State::One, params)
        }
        ElectronPdf::FinalZero => {
            if priors.p0() * survive < 1e-300 {
                return Err(Error::UnreachableState(State::Zero));
            }
            let params = Provenance { priors: Some(*priors), ..params };
            CountDistribution::new(pure(emission.lambda_0 * t), Conditioning::End, State::Zero, params)
        }
        ElectronPdf::FinalOne => {
            let den = priors.p1() + priors.p0() * (1.0 - survive);
            if den < 1e-300 {
                return Err(Error::UnreachableState(State::One));
            }
            // The initial-|0> mixture minus its survival atom is exactly the
            // decayed-during-window part.
            let mut from_zero = decayed()?;
            for_each_poisson(emission.lambda_0 * t, n_max, |n, p| from_zero[n] -= survive * p);
            let stay = pure(emission.lambda_1 * t);
            let pmf = stay
                .iter()
                .zip(&from_zero)
                .map(|(s, d)| ((priors.p1() * s + priors.p0() * d) / den).max(0.0))
                .collect();
            let params = Provenance { priors: Some(*priors), ..params };
            CountDistribution::new(pmf, Conditioning::End, State::One, params)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fig2() -> (SwitchingRates, EmissionRates, Window) {
        (
            SwitchingRates::new(500.0, 300.0).unwrap(),
            EmissionRates::new(5e3, 40e3).unwrap(),
            Window::new(1e-3).unwrap(),
        )
    }

    // Product form exp(-mu) prod_{k<=n} mu/k, independent of ln_gamma.
    fn poisson_product(n: u64, mu: f64) -> f64 {
        let mut ln = -mu;
        for k in 1..=n {
            ln += (mu / k as f64).ln();
        }
        ln.exp()
    }

    #[test]
    fn poisson_examples() {
        assert_eq!(poisson_pmf(0, 0.0).unwrap(), 1.0);
        assert_eq!(poisson_pmf(2, 0.0).unwrap(), 0.0);
        assert_relative_eq!(poisson_pmf(3, 3.0).unwrap(), (-3.0f64).exp() * 27.0 / 6.0, max_relative = 1e-14);
        let v = poisson_pmf(200, 180.0).unwrap();
        assert!(v.is_finite() && v > 0.0);
        assert_relative_eq!(v, poisson_product(200, 180.0), max_relative = 1e-12);
        assert!(poisson_pmf(1, -1.0).is_err());
    }

    #[test]
    fn recurrence_matches_direct_evaluation() {
        for &mu in &[0.3f64, 7.0, 180.0, 2500.0] {
            let n_max = (mu + 12.0 * mu.sqrt()) as usize + 5;
            let mut seen = 0;
            for_each_poisson(mu, n_max, |n, p| {
                seen += 1;
                let direct = poisson_pmf(n as u64, mu).unwrap();
                assert_relative_eq!(p, direct, max_relative = 1e-10);
            });
            assert!(seen > 0);
        }
    }

    #[test]
    fn n_max_respects_bound_and_tail() {
        let w = Window::new(1e-3).unwrap();
        for &l in &[0.0, 10.0, 1e3, 4e4, 1e6] {
            let e = EmissionRates::new(l, l / 2.0).unwrap();
            let n = n_max_for(&e, &w);
            let mu = l * 1e-3;
            assert!(n as f64 >= (mu + 10.0 * mu.sqrt()).ceil());
            let head: f64 = (0..=n as u64).map(|k| poisson_pmf(k, mu).unwrap()).sum();
            assert!(1.0 - head < TAIL_BOUND);
        }
    }

    #[test]
    fn switchless_is_pure_poisson() {
        let r = SwitchingRates::new(0.0, 0.0).unwrap();
        let e = EmissionRates::new(5e3, 40e3).unwrap();
        let w = Window::new(1e-3).unwrap();
        let d = count_pmf_given_initial(State::Zero, &r, &e, &w).unwrap();
        for (n, p) in d.pmf().iter().enumerate() {
            assert!((p - poisson_pmf(n as u64, 5.0).unwrap()).abs() < 1e-12);
        }
        let f = count_pmf_given_final(State::Zero, &r, &e, &w, &StatePriors::certain(State::Zero)).unwrap();
        for (n, p) in f.pmf().iter().enumerate() {
            assert!((p - poisson_pmf(n as u64, 5.0).unwrap()).abs() < 1e-12);
        }
        assert!(matches!(
            count_pmf_given_final(State::One, &r, &e, &w, &StatePriors::certain(State::Zero)),
            Err(Error::UnreachableState(State::One))
        ));
    }

    #[test]
    fn zero_contrast_is_poisson_regardless_of_rates() {
        let r = SwitchingRates::new(800.0, 2000.0).unwrap();
        let e = EmissionRates::new(20e3, 20e3).unwrap();
        let w = Window::new(1e-3).unwrap();
        for s in State::ALL {
            let d = count_pmf_given_initial(s, &r, &e, &w).unwrap();
            for (n, p) in d.pmf().iter().enumerate() {
                assert!((p - poisson_pmf(n as u64, 20.0).unwrap()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn fig2_distributions_are_normalised() {
        let (r, e, w) = fig2();
        let cc = ConditionalCounts::compute(&r, &e, &w).unwrap();
        let priors = steady_state_priors(&r).unwrap();
        for s in State::ALL {
            assert!((cc.given_initial(s).unwrap().total_mass() - 1.0).abs() < 1e-6);
            assert!((cc.given_final(s, &priors).unwrap().total_mass() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn total_probability_identity() {
        let (r, e, w) = fig2();
        let cc = ConditionalCounts::compute(&r, &e, &w).unwrap();
        let priors = StatePriors::new(0.8).unwrap();
        let i0 = cc.given_initial(State::Zero).unwrap();
        let i1 = cc.given_initial(State::One).unwrap();
        let f0 = cc.given_final(State::Zero, &priors).unwrap();
        let f1 = cc.given_final(State::One, &priors).unwrap();
        let q0 = cc.final_state_probability(State::Zero, &priors);
        let q1 = cc.final_state_probability(State::One, &priors);
        assert!((q0 + q1 - 1.0).abs() < 1e-9);
        for n in 0..=cc.n_max() {
            let by_final = q0 * f0.at(n) + q1 * f1.at(n);
            let by_initial = 0.8 * i0.at(n) + 0.2 * i1.at(n);
            assert!((by_final - by_initial).abs() < 1e-6);
        }
    }

    #[test]
    fn priors_helpers() {
        let r = SwitchingRates::new(500.0, 300.0).unwrap();
        assert_relative_eq!(steady_state_priors(&r).unwrap().p0(), 0.375);
        assert_eq!(steady_state_priors(&SwitchingRates::symmetric(42.0).unwrap()).unwrap().p0(), 0.5);
        assert!(matches!(
            steady_state_priors(&SwitchingRates::new(0.0, 0.0).unwrap()),
            Err(Error::DegeneratePriors)
        ));
        let p = StatePriors::new(0.9).unwrap();
        assert_eq!(decayed_priors(&p, 100.0, 0.0).unwrap(), p);
        assert_relative_eq!(decayed_priors(&p, 100.0, 0.01).unwrap().p0(), 0.9 * (-1.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(decayed_priors(&p, 100.0, 0.01).unwrap().p0(), 0.3311, epsilon = 1e-4);
        assert_eq!(decayed_priors(&p, 100.0, 1e6).unwrap().p0(), 0.0);
        assert!(StatePriors::new(1.5).is_err());
        assert!(decayed_priors(&p, 1.0, -1.0).is_err());
    }

    #[test]
    fn electron_forms() {
        let e = EmissionRates::new(1e6, 2e5).unwrap();
        let w = Window::new(20e-6).unwrap();
        let priors = StatePriors::new(0.9).unwrap();
        let one = count_pmf_electron_simplified(ElectronPdf::InitialOne, 3e4, &e, &w, &priors).unwrap();
        for n in 0..=one.n_max() {
            let p = poisson_pmf(n as u64, 4.0).unwrap();
            assert!((one.at(n) - p).abs() <= 1e-12 * p, "n={n}");
        }
        let zero = count_pmf_electron_simplified(ElectronPdf::InitialZero, 0.0, &e, &w, &priors).unwrap();
        for n in 0..=zero.n_max() {
            assert!((zero.at(n) - poisson_pmf(n as u64, 20.0).unwrap()).abs() < 1e-12);
        }
        for which in [ElectronPdf::InitialZero, ElectronPdf::FinalZero, ElectronPdf::FinalOne] {
            let d = count_pmf_electron_simplified(which, 3e4, &e, &w, &priors).unwrap();
            assert!((d.total_mass() - 1.0).abs() < 1e-6, "{which:?}");
        }
    }

    #[test]
    fn dropping_the_survival_term_breaks_normalisation() {
        // Without exp(-gamma T) Poisson(lambda_0 T) the initial-|0> form
        // carries only 1 - exp(-gamma T) of the mass.
        let e = EmissionRates::new(1e6, 2e5).unwrap();
        let w = Window::new(20e-6).unwrap();
        let gamma = 3e4;
        let full = count_pmf_electron_simplified(ElectronPdf::InitialZero, gamma, &e, &w, &StatePriors::uniform()).unwrap();
        let survive = (-gamma * 20e-6f64).exp();
        let without: f64 = (0..=full.n_max())
            .map(|n| full.at(n) - survive * poisson_pmf(n as u64, 20.0).unwrap())
            .sum();
        assert!((without - (1.0 - survive)).abs() < 1e-6);
        assert!((without - 1.0).abs() > 0.1);
    }
}
