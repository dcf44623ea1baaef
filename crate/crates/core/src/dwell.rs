//! Dwell-time statistics of an asymmetric two-state telegraph process.
//!
//! `tau` is always the total time spent in `|0>` during a window of length
//! `T`. Densities are split by the parity of the number of switches: for a
//! system starting in `|0>`, odd parity ends in `|1>` and even parity ends in
//! `|0>`. The switchless event (zero switches, even parity) is a point mass at
//! `tau = T` for `|0>` and at `tau = 0` for `|1>`, kept apart from the
//! continuous part.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::bessel::{i0e, i1e_ratio};
use crate::error::{domain, Result};
use crate::quadrature;
use crate::{Parity, State};

/// Default number of Simpson nodes across the window.
pub const DEFAULT_GRID_NODES: usize = 2001;

/// Rates (Hz) at which the system leaves `|0>` and `|1>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRates", into = "RawRates")]
pub struct SwitchingRates {
    gamma_0: f64,
    gamma_1: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRates {
    gamma_0: f64,
    gamma_1: f64,
}

impl TryFrom<RawRates> for SwitchingRates {
    type Error = crate::Error;
    fn try_from(r: RawRates) -> Result<Self> {
        Self::new(r.gamma_0, r.gamma_1)
    }
}

impl From<SwitchingRates> for RawRates {
    fn from(r: SwitchingRates) -> Self {
        Self { gamma_0: r.gamma_0, gamma_1: r.gamma_1 }
    }
}

impl SwitchingRates {
    pub fn new(gamma_0: f64, gamma_1: f64) -> Result<Self> {
        for (name, v) in [("gamma_0", gamma_0), ("gamma_1", gamma_1)] {
            if !(v.is_finite() && v >= 0.0) {
                return domain(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        Ok(Self { gamma_0, gamma_1 })
    }

    /// Equal rates in both directions.
    pub fn symmetric(gamma: f64) -> Result<Self> {
        Self::new(gamma, gamma)
    }

    pub fn gamma_0(&self) -> f64 {
        self.gamma_0
    }

    pub fn gamma_1(&self) -> f64 {
        self.gamma_1
    }

    /// Rate of leaving `state`.
    pub fn leaving(&self, state: State) -> f64 {
        match state {
            State::Zero => self.gamma_0,
            State::One => self.gamma_1,
        }
    }

    pub fn swapped(&self) -> Self {
        Self { gamma_0: self.gamma_1, gamma_1: self.gamma_0 }
    }
}

/// Measurement window of length `T` seconds and its quadrature resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWindow", into = "RawWindow")]
pub struct Window {
    duration: f64,
    grid_nodes: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWindow {
    duration: f64,
    #[serde(default = "default_nodes")]
    grid_nodes: usize,
}

fn default_nodes() -> usize {
    DEFAULT_GRID_NODES
}

impl TryFrom<RawWindow> for Window {
    type Error = crate::Error;
    fn try_from(r: RawWindow) -> Result<Self> {
        Self::with_grid_nodes(r.duration, r.grid_nodes)
    }
}

impl From<Window> for RawWindow {
    fn from(w: Window) -> Self {
        Self { duration: w.duration, grid_nodes: w.grid_nodes }
    }
}

impl Window {
    pub fn new(duration: f64) -> Result<Self> {
        Self::with_grid_nodes(duration, DEFAULT_GRID_NODES)
    }

    pub fn with_grid_nodes(duration: f64, grid_nodes: usize) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return domain(format!("duration must be finite and positive, got {duration}"));
        }
        if grid_nodes < 3 || grid_nodes.is_multiple_of(2) {
            return domain(format!("grid_nodes must be odd and >= 3, got {grid_nodes}"));
        }
        Ok(Self { duration, grid_nodes })
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn grid_nodes(&self) -> usize {
        self.grid_nodes
    }
}

/// Erlang density of the sum of `n` exponential increments with rate `gamma`.
pub fn erlang_density(n: u64, gamma: f64, x: f64) -> Result<f64> {
    check_count_args(n, gamma, x)?;
    if gamma == 0.0 {
        return Ok(0.0);
    }
    if x == 0.0 {
        return Ok(if n == 1 { gamma } else { 0.0 });
    }
    let k = (n - 1) as f64;
    Ok((gamma.ln() - gamma * x + k * (gamma * x).ln() - ln_gamma(n as f64)).exp())
}

/// Probability that exactly `n` exponential increments (rate `gamma`) are
/// needed for their sum to reach `x`; `n - 1` is Poisson with mean `gamma x`.
pub fn exceed_count_pmf(n: u64, gamma: f64, x: f64) -> Result<f64> {
    check_count_args(n, gamma, x)?;
    let mu = gamma * x;
    if mu == 0.0 {
        return Ok(if n == 1 { 1.0 } else { 0.0 });
    }
    let k = (n - 1) as f64;
    Ok((-mu + k * mu.ln() - ln_gamma(n as f64)).exp())
}

fn check_count_args(n: u64, gamma: f64, x: f64) -> Result<()> {
    if n == 0 {
        return domain("increment count n must be >= 1");
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return domain(format!("rate must be finite and non-negative, got {gamma}"));
    }
    if !(x.is_finite() && x >= 0.0) {
        return domain(format!("x must be finite and non-negative, got {x}"));
    }
    Ok(())
}

// Odd-parity density for a system starting in |0> with leaving rates
// (g0, g1), valid on the closed window. The Bessel growth exp(z) is folded
// into the outer exponent, which is never positive since z <= g0*tau + g1*(T-tau).
pub(crate) fn odd_from_zero(tau: f64, g0: f64, g1: f64, t: f64) -> f64 {
    if g0 == 0.0 {
        return 0.0;
    }
    let rest = (t - tau).max(0.0);
    let base = -g0 * tau - g1 * rest;
    if g1 == 0.0 {
        return g0 * base.exp();
    }
    let z = 2.0 * (g0 * g1 * tau * rest).sqrt();
    g0 * (base + z).exp() * i0e(z)
}

// Even-parity (>= 2 switches) density for a system starting in |0>. The
// sqrt(tau / (T - tau)) I1(z) product is rewritten as g0 g1 tau I1(z)/(z/2),
// which is finite on the whole window.
pub(crate) fn even_from_zero(tau: f64, g0: f64, g1: f64, t: f64) -> f64 {
    if g0 == 0.0 || g1 == 0.0 {
        return 0.0;
    }
    let rest = (t - tau).max(0.0);
    let base = -g0 * tau - g1 * rest;
    let z = 2.0 * (g0 * g1 * tau * rest).sqrt();
    g0 * g1 * tau * (base + z).exp() * i1e_ratio(z)
}

/// Parity-resolved continuous dwell density for an arbitrary initial state.
pub(crate) fn parity_density(
    parity: Parity,
    initial: State,
    rates: &SwitchingRates,
    t: f64,
    tau: f64,
) -> f64 {
    let (g0, g1, x) = match initial {
        State::Zero => (rates.gamma_0, rates.gamma_1, tau),
        State::One => (rates.gamma_1, rates.gamma_0, t - tau),
    };
    match parity {
        Parity::Odd => odd_from_zero(x, g0, g1, t),
        Parity::Even => even_from_zero(x, g0, g1, t),
    }
}

/// Density of `tau` jointly with an odd number of switches, starting in `|0>`.
pub fn dwell_density_odd_given_0(tau: f64, rates: &SwitchingRates, window: &Window) -> Result<f64> {
    let t = window.duration;
    if !(0.0..=t).contains(&tau) {
        return domain(format!("tau = {tau} outside [0, {t}]"));
    }
    Ok(odd_from_zero(tau, rates.gamma_0, rates.gamma_1, t))
}

/// Density of `tau` jointly with an even, nonzero number of switches,
/// starting in `|0>`. The switchless mass is not included.
pub fn dwell_density_even_given_0(
    tau: f64,
    rates: &SwitchingRates,
    window: &Window,
) -> Result<f64> {
    let t = window.duration;
    if !(0.0..t).contains(&tau) {
        return domain(format!("tau = {tau} outside [0, {t})"));
    }
    Ok(even_from_zero(tau, rates.gamma_0, rates.gamma_1, t))
}

/// Full distribution of the time spent in `|0>` given the initial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwellDensity {
    initial: State,
    rates: SwitchingRates,
    window: Window,
}

pub fn dwell_density_given_initial(
    initial: State,
    rates: &SwitchingRates,
    window: &Window,
) -> DwellDensity {
    DwellDensity { initial, rates: *rates, window: *window }
}

impl DwellDensity {
    pub fn initial(&self) -> State {
        self.initial
    }

    /// Continuous part of the density at `tau` (1/s), both parities summed.
    pub fn continuous(&self, tau: f64) -> f64 {
        self.parity_part(Parity::Odd, tau) + self.parity_part(Parity::Even, tau)
    }

    pub fn parity_part(&self, parity: Parity, tau: f64) -> f64 {
        parity_density(parity, self.initial, &self.rates, self.window.duration, tau)
    }

    /// Location of the switchless point mass: `T` for `|0>`, `0` for `|1>`.
    pub fn boundary_mass_at(&self) -> f64 {
        match self.initial {
            State::Zero => self.window.duration,
            State::One => 0.0,
        }
    }

    /// Probability of no switch during the window.
    pub fn boundary_mass(&self) -> f64 {
        (-self.rates.leaving(self.initial) * self.window.duration).exp()
    }

    /// `∫ continuous + boundary mass`, which should be 1.
    pub fn normalization(&self) -> Result<f64> {
        let c = quadrature::integrate(&self.window, &self.rates, |x| self.continuous(x))?;
        Ok(c + self.boundary_mass())
    }

    /// Mean time spent in `|0>`.
    pub fn mean(&self) -> Result<f64> {
        let c = quadrature::integrate(&self.window, &self.rates, |x| x * self.continuous(x))?;
        Ok(c + self.boundary_mass() * self.boundary_mass_at())
    }

    /// Probability that `tau <= x`, including the point mass.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        let x = x.clamp(0.0, self.window.duration);
        let w = Window::with_grid_nodes(x.max(f64::MIN_POSITIVE), self.window.grid_nodes)?;
        let t = self.window.duration;
        let c = if x > 0.0 {
            quadrature::integrate(&w, &self.rates, |s| {
                parity_density(Parity::Odd, self.initial, &self.rates, t, s)
                    + parity_density(Parity::Even, self.initial, &self.rates, t, s)
            })?
        } else {
            0.0
        };
        let point = if self.boundary_mass_at() <= x { self.boundary_mass() } else { 0.0 };
        Ok(c + point)
    }
}

/// Probability of an even or odd number of switches given the initial state.
/// Even parity includes the switchless event; odd is the complement.
pub fn parity_probability(
    parity: Parity,
    initial: State,
    rates: &SwitchingRates,
    window: &Window,
) -> Result<f64> {
    let dd = dwell_density_given_initial(initial, rates, window);
    let even_cont =
        quadrature::integrate(window, rates, |x| dd.parity_part(Parity::Even, x))?;
    let even = (even_cont + dd.boundary_mass()).min(1.0);
    Ok(match parity {
        Parity::Even => even,
        Parity::Odd => 1.0 - even,
    })
}
