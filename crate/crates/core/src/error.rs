use thiserror::Error;

/// Errors raised by the statistics, inference and optimisation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge: relative change {change:.3e} after {nodes} nodes")]
    QuadratureConvergence { change: f64, nodes: usize },

    #[error("distribution is not normalised: total mass {mass}")]
    Normalization { mass: f64 },

    #[error("final state {0} is unreachable under the given priors and rates")]
    UnreachableState(crate::State),

    #[error("steady-state priors are undefined when both switching rates are zero")]
    DegeneratePriors,

    #[error("distributions are incompatible: {0}")]
    Incompatible(String),

    #[error("accepted region is empty")]
    EmptyAcceptance,

    #[error("insufficient samples in class `{class}` ({samples} trajectories)")]
    InsufficientSamples { class: String, samples: usize },

    #[error("control value {value} outside calibration range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("preparation is impossible: success rate is zero")]
    ImpossiblePreparation,

    #[error("no grid cell reaches the target fidelity {target}; best achieved {best}")]
    NoFeasiblePoint { target: f64, best: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
