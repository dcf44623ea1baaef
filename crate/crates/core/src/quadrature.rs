//! Composite Simpson grids on the measurement window `[0, T]`.
//!
//! The base grid is `grid_nodes` equally spaced nodes. When a switching rate
//! is fast compared to the base spacing, geometric breakpoints are added near
//! both ends of the window where the dwell densities have exponential
//! boundary layers of width `1/gamma`. Every panel between breakpoints carries
//! `2 * 2^level` Simpson sub-intervals, so raising `level` by one doubles the
//! node count everywhere.

use crate::error::{Error, Result};
use crate::{SwitchingRates, Window};

/// Relative change between successive refinements accepted as converged.
pub const CONVERGENCE_TOL: f64 = 1e-6;
/// Number of node doublings attempted before giving up.
pub const MAX_DOUBLINGS: u32 = 4;

#[derive(Debug, Clone)]
pub struct TauGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    level: u32,
}

impl TauGrid {
    pub fn new(window: &Window, rates: &SwitchingRates, level: u32) -> Self {
        let t = window.duration();
        let panels = (window.grid_nodes() - 1) / 2;
        let width = t / panels as f64;

        let mut breaks: Vec<f64> = (0..=panels).map(|i| t * i as f64 / panels as f64).collect();
        let fastest = rates.gamma_0().max(rates.gamma_1());
        if fastest > 0.0 {
            let scale = 1.0 / fastest;
            let reach = 10.0 * width;
            if scale < reach {
                let mut d = 1e-3 * scale;
                while d < reach {
                    breaks.push(d);
                    breaks.push(t - d);
                    d *= 1.25;
                }
            }
        }
        breaks.retain(|b| (0.0..=t).contains(b));
        breaks.sort_by(f64::total_cmp);
        let min_gap = t * 1e-13;
        breaks.dedup_by(|b, a| (*b - *a).abs() <= min_gap);
        *breaks.last_mut().expect("grid has endpoints") = t;

        let sub = 2usize << level;
        let mut nodes = Vec::with_capacity((breaks.len() - 1) * sub + 1);
        let mut weights = Vec::with_capacity(nodes.capacity());
        nodes.push(0.0);
        weights.push(0.0);
        for pair in breaks.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let h = (b - a) / sub as f64;
            *weights.last_mut().unwrap() += h / 3.0;
            for k in 1..=sub {
                let x = if k == sub { b } else { a + h * k as f64 };
                nodes.push(x);
                let w = if k == sub {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                weights.push(w * h / 3.0);
            }
        }
        Self { nodes, weights, level }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Runs `eval` at increasing refinement levels until two successive results
/// differ by at most [`CONVERGENCE_TOL`] under `change`, returning the finer one.
pub fn converge<R>(
    mut eval: impl FnMut(u32) -> Result<(R, usize)>,
    change: impl Fn(&R, &R) -> f64,
) -> Result<R> {
    let (mut prev, _) = eval(0)?;
    let mut last_change = f64::INFINITY;
    let mut last_nodes = 0;
    for level in 1..=MAX_DOUBLINGS {
        let (next, nodes) = eval(level)?;
        last_change = change(&prev, &next);
        last_nodes = nodes;
        if last_change <= CONVERGENCE_TOL {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureConvergence { change: last_change, nodes: last_nodes })
}

/// Integral of `f` over the window with the doubling convergence policy.
pub fn integrate(window: &Window, rates: &SwitchingRates, f: impl Fn(f64) -> f64) -> Result<f64> {
    converge(
        |level| {
            let grid = TauGrid::new(window, rates, level);
            Ok((grid.integrate(&f), grid.len()))
        },
        |a, b| relative_change(*a, *b),
    )
}

pub(crate) fn relative_change(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
