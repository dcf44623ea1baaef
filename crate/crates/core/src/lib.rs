//! Photon-counting statistics for two-level systems whose state is
//! demolished during readout.
//!
//! The system is an asymmetric telegraph process: it leaves `|0>` at rate
//! `gamma_0` and `|1>` at rate `gamma_1` while emitting detected photons at
//! rate `lambda_0` or `lambda_1`. From the closed-form distribution of the time
//! spent in each state ([`dwell`]) the crate builds count distributions
//! conditioned on the state at the start or at the end of the window
//! ([`counting`]), decision rules and their error/efficiency tradeoffs
//! ([`inference`]), and scenario sweeps that pick readout parameters for a
//! target fidelity at minimal wall-clock cost ([`optimizer`]). A Monte-Carlo
//! sampler ([`montecarlo`]) provides an independent check of all of it.
//!
//! Conventions: index `i` labels the state, `gamma_i` is the rate of leaving
//! state `i` and `lambda_i` is the emission rate while in state `i`. Rates are
//! in Hz, durations in seconds.

pub mod bessel;
pub mod counting;
pub mod dwell;
mod error;
pub mod inference;
pub mod io;
pub mod montecarlo;
pub mod optimizer;
pub mod quadrature;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use counting::{
    count_pmf_electron_simplified, count_pmf_given_final, count_pmf_given_initial,
    decayed_priors, poisson_pmf, steady_state_priors, Conditioning, ConditionalCounts,
    CountDistribution, ElectronPdf, EmissionRates, StatePriors,
};
pub use dwell::{
    dwell_density_even_given_0, dwell_density_given_initial, dwell_density_odd_given_0,
    erlang_density, exceed_count_pmf, parity_probability, DwellDensity, SwitchingRates, Window,
};
pub use error::{Error, Result};

/// One of the two basis states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum State {
    Zero,
    One,
}

impl State {
    pub const ALL: [State; 2] = [State::Zero, State::One];

    pub fn other(self) -> Self {
        match self {
            State::Zero => State::One,
            State::One => State::Zero,
        }
    }

    pub fn index(self) -> usize {
        match self {
            State::Zero => 0,
            State::One => 1,
        }
    }
}

impl TryFrom<u8> for State {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(State::Zero),
            1 => Ok(State::One),
            _ => Err(format!("state must be 0 or 1, got {v}")),
        }
    }
}

impl From<State> for u8 {
    fn from(s: State) -> u8 {
        s.index() as u8
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{}>", self.index())
    }
}

/// Parity of the number of switches in the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    /// Parity that takes `from` to `to`.
    pub fn between(from: State, to: State) -> Self {
        if from == to {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}
