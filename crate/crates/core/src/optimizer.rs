//! Scenario sweeps: pick the excitation power (or repetition count), window
//! and count threshold that reach a target fidelity at the least expected
//! wall-clock time per successful shot.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counting::{CountDistribution, ConditionalCounts, Conditioning, EmissionRates, StatePriors};
use crate::dwell::{SwitchingRates, Window};
use crate::error::{domain, Error, Result};
use crate::inference::{error_rate_ml, ml_crossing, ml_decide, postselection_curve, Decision, TiePolicy};
use crate::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Gamma0,
    Gamma1,
    Lambda0,
    Lambda1,
}

impl Quantity {
    pub const ALL: [Quantity; 4] = [Quantity::Gamma0, Quantity::Gamma1, Quantity::Lambda0, Quantity::Lambda1];
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quantity::Gamma0 => "gamma_0",
            Quantity::Gamma1 => "gamma_1",
            Quantity::Lambda0 => "lambda_0",
            Quantity::Lambda1 => "lambda_1",
        })
    }
}

/// Piecewise-linear rate as a function of a control value (laser power in W,
/// or anything else monotone).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCurve", into = "RawCurve")]
pub struct CalibrationCurve {
    quantity: Quantity,
    knots: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCurve {
    quantity: Quantity,
    knots: Vec<(f64, f64)>,
}

impl TryFrom<RawCurve> for CalibrationCurve {
    type Error = Error;
    fn try_from(r: RawCurve) -> Result<Self> {
        Self::new(r.quantity, r.knots)
    }
}

impl From<CalibrationCurve> for RawCurve {
    fn from(c: CalibrationCurve) -> Self {
        RawCurve { quantity: c.quantity, knots: c.knots }
    }
}

impl CalibrationCurve {
    pub fn new(quantity: Quantity, knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return domain(format!("{quantity}: calibration needs at least 2 knots, got {}", knots.len()));
        }
        for (i, &(x, y)) in knots.iter().enumerate() {
            if !x.is_finite() || !(y.is_finite() && y >= 0.0) {
                return domain(format!("{quantity}: knot {i} ({x}, {y}) must be finite with rate >= 0"));
            }
            if i > 0 && x <= knots[i - 1].0 {
                return domain(format!("{quantity}: control values must be strictly increasing at knot {i}"));
            }
        }
        Ok(Self { quantity, knots })
    }

    pub fn quantity(&self) -> Quantity {
        self.quantity
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn range(&self) -> (f64, f64) {
        (self.knots[0].0, self.knots[self.knots.len() - 1].0)
    }

    pub fn interpolate(&self, control: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if !(control >= lo && control <= hi) {
            return Err(Error::OutOfRange { value: control, lo, hi });
        }
        let i = self.knots.partition_point(|&(x, _)| x < control);
        let (x1, y1) = self.knots[i];
        if x1 == control || i == 0 {
            return Ok(y1);
        }
        let (x0, y0) = self.knots[i - 1];
        let s = (control - x0) / (x1 - x0);
        Ok(y0 + s * (y1 - y0))
    }
}

/// One curve per rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    curves: [CalibrationCurve; 4],
}

impl CalibrationSet {
    pub fn new(curves: Vec<CalibrationCurve>) -> Result<Self> {
        let mut slots: [Option<CalibrationCurve>; 4] = Default::default();
        for c in curves {
            let k = Quantity::ALL.iter().position(|q| *q == c.quantity).unwrap();
            if slots[k].is_some() {
                return domain(format!("duplicate calibration curve for {}", c.quantity));
            }
            slots[k] = Some(c);
        }
        let mut out = Vec::with_capacity(4);
        for (slot, q) in slots.into_iter().zip(Quantity::ALL) {
            out.push(slot.ok_or_else(|| Error::Domain(format!("missing calibration curve for {q}")))?);
        }
        Ok(Self { curves: out.try_into().unwrap() })
    }

    pub fn curve(&self, q: Quantity) -> &CalibrationCurve {
        &self.curves[Quantity::ALL.iter().position(|x| *x == q).unwrap()]
    }

    /// Control range covered by all four curves.
    pub fn range(&self) -> (f64, f64) {
        self.curves.iter().map(|c| c.range()).fold((f64::NEG_INFINITY, f64::INFINITY), |a, b| {
            (a.0.max(b.0), a.1.min(b.1))
        })
    }

    pub fn at(&self, control: f64) -> Result<(SwitchingRates, EmissionRates)> {
        let v = |q| self.curve(q).interpolate(control);
        Ok((
            SwitchingRates::new(v(Quantity::Gamma0)?, v(Quantity::Gamma1)?)?,
            EmissionRates::new(v(Quantity::Lambda0)?, v(Quantity::Lambda1)?)?,
        ))
    }
}

/// Shape parameters for [`synthetic_calibration`]. Switching rates grow
/// linearly with power, emission saturates as `lambda_sat P / (P + p_sat)`
/// on top of a constant background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticShape {
    /// Hz per W.
    pub gamma_0_slope: f64,
    pub gamma_1_slope: f64,
    pub lambda_0_sat: f64,
    pub lambda_1_sat: f64,
    /// W.
    pub p_sat: f64,
    #[serde(default)]
    pub background: f64,
}

pub fn synthetic_calibration(shape: &SyntheticShape, powers: &[f64]) -> Result<CalibrationSet> {
    if shape.p_sat.is_nan() || shape.p_sat <= 0.0 {
        return domain("p_sat must be positive");
    }
    let sat = |l: f64, p: f64| shape.background + l * p / (p + shape.p_sat);
    let mk = |q, f: &dyn Fn(f64) -> f64| CalibrationCurve::new(q, powers.iter().map(|&p| (p, f(p))).collect());
    CalibrationSet::new(vec![
        mk(Quantity::Gamma0, &|p| shape.gamma_0_slope * p)?,
        mk(Quantity::Gamma1, &|p| shape.gamma_1_slope * p)?,
        mk(Quantity::Lambda0, &|p| sat(shape.lambda_0_sat, p))?,
        mk(Quantity::Lambda1, &|p| sat(shape.lambda_1_sat, p))?,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    ElectronReadout,
    ElectronPreparation,
    ChargePreparation,
    NuclearSsr,
}

impl ScenarioKind {
    /// Readout asks which state the system was in before the window;
    /// preparation asks which state it is left in.
    pub fn conditioning(self) -> Conditioning {
        match self {
            ScenarioKind::ElectronReadout => Conditioning::Start,
            _ => Conditioning::End,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Accounting {
    /// Every attempt runs the full sequence; failures are discarded afterwards.
    #[default]
    Postselection,
    /// Failed attempts restart immediately; the sequence runs once.
    OnDemand,
}

/// Time costs in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overhead {
    /// Fixed cost added to every readout attempt.
    #[serde(default)]
    pub per_attempt: f64,
    /// Cost of the sequence the prepared or read-out state is used in.
    #[serde(default)]
    pub per_point: f64,
    /// Extra cost per repetition (nuclear readout only).
    #[serde(default)]
    pub per_repetition: f64,
    #[serde(default)]
    pub accounting: Accounting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub target_fidelity: f64,
    pub target_state: State,
    pub priors_at_start: StatePriors,
    #[serde(default)]
    pub overhead: Overhead,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let t = self.target_fidelity;
        if !(t > 0.0 && t < 1.0) {
            return domain(format!("target_fidelity must lie in (0, 1), got {t}"));
        }
        let o = &self.overhead;
        for (name, v) in [("per_attempt", o.per_attempt), ("per_point", o.per_point), ("per_repetition", o.per_repetition)] {
            if !(v.is_finite() && v >= 0.0) {
                return domain(format!("overhead.{name} must be finite and >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// Mean of the geometric number of attempts until success.
pub fn attempts_expected(success_rate: f64) -> Result<f64> {
    if success_rate == 0.0 {
        return Err(Error::ImpossiblePreparation);
    }
    if !(success_rate > 0.0 && success_rate <= 1.0 + 1e-12) {
        return domain(format!("success rate must lie in (0, 1], got {success_rate}"));
    }
    Ok(1.0 / success_rate.min(1.0))
}

pub fn total_time(attempts: f64, per_attempt: f64, per_point: f64) -> Result<f64> {
    if !(attempts >= 0.0 && per_attempt >= 0.0 && per_point >= 0.0) {
        return domain("attempts and times must be non-negative");
    }
    Ok(attempts * per_attempt + per_point)
}

/// Time per data point under either accounting. `readout` is the duration of
/// one attempt.
pub fn time_per_point(attempts: f64, readout: f64, overhead: &Overhead) -> Result<f64> {
    let per_attempt = readout + overhead.per_attempt;
    match overhead.accounting {
        Accounting::Postselection => total_time(attempts, per_attempt + overhead.per_point, 0.0),
        Accounting::OnDemand => total_time(attempts, per_attempt, overhead.per_point),
    }
}

/// A single repetition of a repetitive readout. Emission rates apply while
/// the repetition lasts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepetitionUnit {
    pub duration: f64,
    pub lambda_0: f64,
    pub lambda_1: f64,
}

/// Aggregate window of `reps` repetitions. The per-repetition flip
/// probability becomes the continuous rate `-ln(1 - d) / duration` in both
/// directions, which is accurate to `O(d^2)` per repetition.
pub fn nuclear_repetition_model(
    reps: usize,
    unit: &RepetitionUnit,
    decay_per_rep: f64,
) -> Result<(SwitchingRates, EmissionRates, Window)> {
    if reps == 0 {
        return domain("reps must be >= 1");
    }
    if !(0.0..1.0).contains(&decay_per_rep) {
        return domain(format!("decay_per_rep must lie in [0, 1), got {decay_per_rep}"));
    }
    if !(unit.duration > 0.0 && unit.duration.is_finite()) {
        return domain(format!("repetition duration must be positive, got {}", unit.duration));
    }
    let gamma = -(-decay_per_rep).ln_1p() / unit.duration;
    Ok((
        SwitchingRates::symmetric(gamma)?,
        EmissionRates::new(unit.lambda_0, unit.lambda_1)?,
        Window::new(reps as f64 * unit.duration)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepGrid {
    Power { powers: Vec<f64>, durations: Vec<f64> },
    Repetitions { reps: Vec<usize>, unit: RepetitionUnit, decay_per_rep: f64 },
}

impl SweepGrid {
    /// Row values (power or repetitions).
    pub fn controls(&self) -> Vec<f64> {
        match self {
            SweepGrid::Power { powers, .. } => powers.clone(),
            SweepGrid::Repetitions { reps, .. } => reps.iter().map(|&r| r as f64).collect(),
        }
    }

    /// Column values: window durations, or the repetition length.
    pub fn columns(&self) -> Vec<f64> {
        match self {
            SweepGrid::Power { durations, .. } => durations.clone(),
            SweepGrid::Repetitions { unit, .. } => vec![unit.duration],
        }
    }

    fn validate(&self) -> Result<()> {
        let increasing = |name: &str, v: &[f64]| -> Result<()> {
            if v.is_empty() {
                return domain(format!("grid `{name}` is empty"));
            }
            if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return domain(format!("grid `{name}` must hold positive finite values"));
            }
            if v.windows(2).any(|w| w[1] <= w[0]) {
                return domain(format!("grid `{name}` must be strictly increasing"));
            }
            Ok(())
        };
        match self {
            SweepGrid::Power { powers, durations } => {
                increasing("powers", powers)?;
                increasing("durations", durations)
            }
            SweepGrid::Repetitions { .. } => increasing("reps", &self.controls()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub control: f64,
    pub duration: f64,
    /// Threshold of the least stringent feasible post-selection.
    pub threshold: Option<usize>,
    pub ml_threshold: usize,
    /// Distance of `threshold` from `ml_threshold` towards the target side.
    pub threshold_shift: Option<i64>,
    /// Fidelity at `threshold`, or the best reachable when infeasible.
    pub fidelity: f64,
    pub efficiency: Option<f64>,
    pub attempts: Option<f64>,
    pub total_time: Option<f64>,
}

impl SweepPoint {
    pub fn feasible(&self) -> bool {
        self.threshold.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub scenario: Scenario,
    pub controls: Vec<f64>,
    pub columns: Vec<f64>,
    /// Row-major over `controls` x `columns`.
    pub grid: Vec<SweepPoint>,
    pub optimum: usize,
}

impl SweepResult {
    pub fn optimum_point(&self) -> &SweepPoint {
        &self.grid[self.optimum]
    }

    pub fn plane(&self, f: impl Fn(&SweepPoint) -> Option<f64>) -> Vec<Vec<Option<f64>>> {
        self.grid.chunks(self.columns.len()).map(|row| row.iter().map(&f).collect()).collect()
    }
}

fn cell_distributions(
    scenario: &Scenario,
    rates: &SwitchingRates,
    emission: &EmissionRates,
    window: &Window,
) -> Result<(CountDistribution, CountDistribution, StatePriors)> {
    let cc = ConditionalCounts::compute(rates, emission, window)?;
    let target = scenario.target_state;
    let start = scenario.priors_at_start;
    match scenario.kind.conditioning() {
        Conditioning::Start => Ok((cc.given_initial(target)?, cc.given_initial(target.other())?, start)),
        Conditioning::End => {
            let weights = cc.final_priors(&start)?;
            Ok((cc.given_final(target, &start)?, cc.given_final(target.other(), &start)?, weights))
        }
    }
}

/// Least stringent post-selection reaching `scenario.target_fidelity` for one
/// readout configuration. `readout` is the duration of one attempt.
pub fn evaluate_cell(
    scenario: &Scenario,
    rates: &SwitchingRates,
    emission: &EmissionRates,
    window: &Window,
    readout: f64,
    control: f64,
) -> Result<SweepPoint> {
    let target = scenario.target_state;
    let (dt, dother, weights) = match cell_distributions(scenario, rates, emission, window) {
        Ok(v) => v,
        // A target that cannot be reached is an infeasible cell.
        Err(Error::UnreachableState(_)) => {
            return Ok(SweepPoint {
                control,
                duration: window.duration(),
                threshold: None,
                ml_threshold: 0,
                threshold_shift: None,
                fidelity: 0.0,
                efficiency: None,
                attempts: None,
                total_time: None,
            })
        }
        Err(e) => return Err(e),
    };
    let bright = dt.mean() >= dother.mean();
    let curve = postselection_curve(&dt, &dother, &weights)?;
    let n_top = dt.n_max() + 1;
    let ml_threshold = match ml_crossing(&dt, &dother, Some(&weights))? {
        Some(n) => n,
        None => {
            let at_zero = ml_decide(0, &dt, &dother, Some(&weights), TiePolicy::HalfMass)?;
            let target_everywhere = at_zero == Decision::State(target);
            if target_everywhere == bright { 0 } else { n_top }
        }
    };
    // Least stringent first: low thresholds on the bright side, high ones on
    // the dark side.
    let ordered: Box<dyn Iterator<Item = _>> =
        if bright { Box::new(curve.iter()) } else { Box::new(curve.iter().rev()) };
    let mut best = 0.0f64;
    for p in ordered {
        best = best.max(p.fidelity);
        if p.fidelity >= scenario.target_fidelity {
            let attempts = attempts_expected(p.success_rate)?;
            let shift = if bright {
                p.threshold as i64 - ml_threshold as i64
            } else {
                ml_threshold as i64 - p.threshold as i64
            };
            return Ok(SweepPoint {
                control,
                duration: window.duration(),
                threshold: Some(p.threshold),
                ml_threshold,
                threshold_shift: Some(shift),
                fidelity: p.fidelity,
                efficiency: Some(p.efficiency),
                attempts: Some(attempts),
                total_time: Some(time_per_point(attempts, readout, &scenario.overhead)?),
            });
        }
    }
    Ok(SweepPoint {
        control,
        duration: window.duration(),
        threshold: None,
        ml_threshold,
        threshold_shift: None,
        fidelity: best,
        efficiency: None,
        attempts: None,
        total_time: None,
    })
}

/// Evaluates every cell of `grid`. Cells are independent and run in
/// parallel; the result is in row-major order.
pub fn sweep_cells(
    scenario: &Scenario,
    calibration: Option<&CalibrationSet>,
    grid: &SweepGrid,
) -> Result<Vec<SweepPoint>> {
    scenario.validate()?;
    grid.validate()?;
    match grid {
        SweepGrid::Power { powers, durations } => {
            if scenario.kind == ScenarioKind::NuclearSsr {
                return domain("nuclear_ssr needs a repetitions grid");
            }
            let cal = calibration.ok_or_else(|| Error::Domain("power sweep needs a calibration".into()))?;
            let (lo, hi) = cal.range();
            for &p in powers {
                if !(p >= lo && p <= hi) {
                    return Err(Error::OutOfRange { value: p, lo, hi });
                }
            }
            let cells: Vec<(f64, f64)> =
                powers.iter().flat_map(|&p| durations.iter().map(move |&t| (p, t))).collect();
            cells
                .par_iter()
                .map(|&(p, t)| {
                    let (rates, emission) = cal.at(p)?;
                    evaluate_cell(scenario, &rates, &emission, &Window::new(t)?, t, p)
                })
                .collect()
        }
        SweepGrid::Repetitions { reps, unit, decay_per_rep } => {
            if scenario.kind != ScenarioKind::NuclearSsr {
                return domain("repetitions grid is only valid for nuclear_ssr");
            }
            reps.par_iter()
                .map(|&r| {
                    let (rates, emission, window) = nuclear_repetition_model(r, unit, *decay_per_rep)?;
                    let readout = r as f64 * (unit.duration + scenario.overhead.per_repetition);
                    evaluate_cell(scenario, &rates, &emission, &window, readout, r as f64)
                })
                .collect()
        }
    }
}

/// Index of the feasible cell with the least total time. Ties go to the
/// earlier cell, i.e. lower control then shorter duration.
pub fn select_optimum(cells: &[SweepPoint], target: f64) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in cells.iter().enumerate() {
        if let Some(t) = c.total_time {
            if best.is_none_or(|(_, b)| t < b) {
                best = Some((i, t));
            }
        }
    }
    best.map(|(i, _)| i).ok_or_else(|| Error::NoFeasiblePoint {
        target,
        best: cells.iter().map(|c| c.fidelity).fold(0.0, f64::max),
    })
}

pub fn sweep(scenario: &Scenario, calibration: Option<&CalibrationSet>, grid: &SweepGrid) -> Result<SweepResult> {
    let cells = sweep_cells(scenario, calibration, grid)?;
    let optimum = select_optimum(&cells, scenario.target_fidelity)?;
    Ok(SweepResult {
        scenario: *scenario,
        controls: grid.controls(),
        columns: grid.columns(),
        grid: cells,
        optimum,
    })
}

/// ML error without data loss as a function of window length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationError {
    pub duration: f64,
    /// Estimating the final state, weighted by final-state probabilities.
    pub error_final: f64,
    /// Estimating the initial state.
    pub error_initial: f64,
}

pub fn error_vs_duration(
    rates: &SwitchingRates,
    emission: &EmissionRates,
    priors: &StatePriors,
    durations: &[f64],
) -> Result<Vec<DurationError>> {
    if durations.is_empty() {
        return domain("duration grid is empty");
    }
    durations
        .par_iter()
        .map(|&t| {
            let cc = ConditionalCounts::compute(rates, emission, &Window::new(t)?)?;
            let fp = cc.final_priors(priors)?;
            let error_final = error_rate_ml(&cc.given_final(State::Zero, priors)?, &cc.given_final(State::One, priors)?, &fp)?;
            let error_initial = error_rate_ml(&cc.given_initial(State::Zero)?, &cc.given_initial(State::One)?, priors)?;
            Ok(DurationError { duration: t, error_final, error_initial })
        })
        .collect()
}

/// Index of the smallest `error_final`, first on ties.
pub fn argmin_error(curve: &[DurationError]) -> Option<usize> {
    (0..curve.len()).min_by(|&a, &b| curve[a].error_final.total_cmp(&curve[b].error_final))
}
