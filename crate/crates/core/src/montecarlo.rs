//! Stochastic oracle: telegraph trajectories and photon counts sampled
//! directly from their generative definition.
//!
//! Every trajectory draws its randomness from a ChaCha8 generator keyed by
//! `seed`, positioned on stream `stream_id` at a block offset fixed by the
//! trajectory index. Results therefore depend only on
//! `(seed, stream_id, index)`, and any partition of the work reproduces the
//! same trajectories.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counting::{n_max_for, EmissionRates, StatePriors};
use crate::dwell::{SwitchingRates, Window};
use crate::error::{domain, Error, Result};
use crate::State;

/// Minimum number of runs accepted by [`empirical_distributions`].
pub const MIN_RUNS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub runs: usize,
    pub seed: u64,
    #[serde(default)]
    pub stream_id: u64,
}

impl McConfig {
    pub fn new(runs: usize, seed: u64) -> Self {
        Self { runs, seed, stream_id: 0 }
    }

    pub fn with_stream(self, stream_id: u64) -> Self {
        Self { stream_id, ..self }
    }
}

/// Generator for trajectory `index` of stream `stream_id`.
pub fn trajectory_rng(seed: u64, stream_id: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng.set_word_pos(u128::from(index) << 32);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: State,
    pub final_state: State,
    pub switch_times: Vec<f64>,
    pub dwell_in_0: f64,
    pub switch_count: usize,
    pub duration: f64,
}

/// Alternating exponential holding times until the window is exceeded; the
/// last segment is clipped at `T`.
pub fn sample_trajectory<R: Rng + ?Sized>(
    rng: &mut R,
    initial: State,
    rates: &SwitchingRates,
    window: &Window,
) -> Trajectory {
    let t_end = window.duration();
    let mut state = initial;
    let mut now = 0.0;
    let mut dwell_in_0 = 0.0;
    let mut switch_times = Vec::new();
    loop {
        let rate = rates.leaving(state);
        let hold = if rate > 0.0 {
            let e: f64 = Exp1.sample(rng);
            e / rate
        } else {
            f64::INFINITY
        };
        let next = now + hold;
        let end = next.min(t_end);
        if state == State::Zero {
            dwell_in_0 += end - now;
        }
        if next >= t_end {
            break;
        }
        switch_times.push(next);
        now = next;
        state = state.other();
    }
    Trajectory {
        initial,
        final_state: state,
        switch_count: switch_times.len(),
        switch_times,
        dwell_in_0: dwell_in_0.clamp(0.0, t_end),
        duration: t_end,
    }
}

/// One Poisson count with mean `lambda_0 dwell + lambda_1 (T - dwell)`.
pub fn sample_counts<R: Rng + ?Sized>(
    rng: &mut R,
    trajectory: &Trajectory,
    emission: &EmissionRates,
) -> u64 {
    let mean = emission.mean_count(trajectory.dwell_in_0, trajectory.duration);
    sample_poisson(rng, mean)
}

pub(crate) fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let p = Poisson::new(mean).expect("positive finite Poisson mean");
    p.sample(rng) as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shot {
    pub trajectory: Trajectory,
    pub count: u64,
}

/// Trajectory `index` of the run: initial state from `priors`, then the
/// trajectory and its count, all from one generator.
pub fn sample_shot(
    seed: u64,
    stream_id: u64,
    index: u64,
    rates: &SwitchingRates,
    emission: &EmissionRates,
    window: &Window,
    priors: &StatePriors,
) -> Shot {
    let mut rng = trajectory_rng(seed, stream_id, index);
    let initial = if rng.random::<f64>() < priors.p0() { State::Zero } else { State::One };
    let trajectory = sample_trajectory(&mut rng, initial, rates, window);
    let count = sample_counts(&mut rng, &trajectory, emission);
    Shot { trajectory, count }
}

pub fn simulate(
    config: &McConfig,
    rates: &SwitchingRates,
    emission: &EmissionRates,
    window: &Window,
    priors: &StatePriors,
) -> Vec<Shot> {
    (0..config.runs as u64)
        .into_par_iter()
        .map(|i| sample_shot(config.seed, config.stream_id, i, rates, emission, window, priors))
        .collect()
}

/// Runs `streams` independent streams of `runs_per_stream` trajectories in
/// parallel and concatenates them in stream order.
pub fn simulate_streams(
    seed: u64,
    streams: u64,
    runs_per_stream: usize,
    rates: &SwitchingRates,
    emission: &EmissionRates,
    window: &Window,
    priors: &StatePriors,
) -> Vec<Shot> {
    let parts: Vec<Vec<Shot>> = (0..streams)
        .into_par_iter()
        .map(|s| {
            let cfg = McConfig::new(runs_per_stream, seed).with_stream(s);
            simulate(&cfg, rates, emission, window, priors)
        })
        .collect();
    parts.into_iter().flatten().collect()
}

/// Conditioning class of an empirical histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McClass {
    Initial(State),
    Final(State),
}

impl McClass {
    pub const ALL: [McClass; 4] = [
        McClass::Initial(State::Zero),
        McClass::Initial(State::One),
        McClass::Final(State::Zero),
        McClass::Final(State::One),
    ];

    pub fn contains(&self, t: &Trajectory) -> bool {
        match *self {
            McClass::Initial(s) => t.initial == s,
            McClass::Final(s) => t.final_state == s,
        }
    }
}

impl fmt::Display for McClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            McClass::Initial(s) => write!(f, "initial_{}", s.index()),
            McClass::Final(s) => write!(f, "final_{}", s.index()),
        }
    }
}

/// Normalised count histogram of one conditioning class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalHistogram {
    pub class: McClass,
    pub samples: usize,
    /// Samples with counts above the last bin.
    pub overflow: usize,
    pub pmf: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl EmpiricalHistogram {
    pub fn from_counts(class: McClass, counts: impl IntoIterator<Item = u64>, n_max: usize) -> Self {
        let mut bins = vec![0u64; n_max + 1];
        let mut samples = 0;
        let mut overflow = 0;
        for c in counts {
            samples += 1;
            match bins.get_mut(c as usize) {
                Some(b) => *b += 1,
                None => overflow += 1,
            }
        }
        let n = samples.max(1) as f64;
        let pmf: Vec<f64> = bins.iter().map(|&b| b as f64 / n).collect();
        let stderr = pmf.iter().map(|&p| (p * (1.0 - p) / n).sqrt()).collect();
        Self { class, samples, overflow, pmf, stderr }
    }

    pub fn mean_stderr(&self) -> f64 {
        self.stderr.iter().sum::<f64>() / self.stderr.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalDistributions {
    pub histograms: Vec<EmpiricalHistogram>,
}

impl EmpiricalDistributions {
    pub fn get(&self, class: McClass) -> &EmpiricalHistogram {
        self.histograms.iter().find(|h| h.class == class).expect("all four classes present")
    }
}

/// Histograms of the four conditioning classes over the analytic `n_max`.
pub fn empirical_distributions(
    config: &McConfig,
    rates: &SwitchingRates,
    emission: &EmissionRates,
    window: &Window,
    priors: &StatePriors,
) -> Result<EmpiricalDistributions> {
    if config.runs < MIN_RUNS {
        return domain(format!("at least {MIN_RUNS} runs are required, got {}", config.runs));
    }
    let shots = simulate(config, rates, emission, window, priors);
    histograms_from_shots(&shots, n_max_for(emission, window))
}

pub fn histograms_from_shots(shots: &[Shot], n_max: usize) -> Result<EmpiricalDistributions> {
    let histograms: Vec<_> = McClass::ALL
        .iter()
        .map(|class| {
            let counts = shots.iter().filter(|s| class.contains(&s.trajectory)).map(|s| s.count);
            EmpiricalHistogram::from_counts(*class, counts, n_max)
        })
        .collect();
    let empty: Vec<String> =
        histograms.iter().filter(|h| h.samples == 0).map(|h| h.class.to_string()).collect();
    if !empty.is_empty() {
        return Err(Error::InsufficientSamples { class: empty.join(", "), samples: 0 });
    }
    Ok(EmpiricalDistributions { histograms })
}

/// Total-variation distance between two pmfs on a common support.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().max(b.len());
    let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    0.5 * (0..len).map(|i| (get(a, i) - get(b, i)).abs()).sum::<f64>()
}

/// Repeat-until-success: the number of attempts each episode needed before
/// `accept(count)` held, capped at `max_attempts`. Attempt `k` of episode `e`
/// uses trajectory index `e * max_attempts + k`.
pub fn repeat_until_success(
    config: &McConfig,
    rates: &SwitchingRates,
    emission: &EmissionRates,
    window: &Window,
    priors: &StatePriors,
    max_attempts: u64,
    accept: impl Fn(&Shot) -> bool + Sync,
) -> Vec<u64> {
    (0..config.runs as u64)
        .into_par_iter()
        .map(|e| {
            for k in 0..max_attempts {
                let shot = sample_shot(
                    config.seed,
                    config.stream_id,
                    e * max_attempts + k,
                    rates,
                    emission,
                    window,
                    priors,
                );
                if accept(&shot) {
                    return k + 1;
                }
            }
            max_attempts
        })
        .collect()
}
