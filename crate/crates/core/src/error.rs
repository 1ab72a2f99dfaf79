use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("graph is not connected ({reached} of {n} states reachable from state 0)")]
    Disconnected { reached: usize, n: usize },

    #[error("measure is not stationary for the forward kernel (residual {residual:e})")]
    NotStationary { residual: f64 },

    #[error("exponent out of range: edge difference {value} exceeds {limit}")]
    Range { value: f64, limit: f64 },

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("time {t} outside the admissible window [{lo}, {hi}]")]
    TimeOutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("{0} is singular at an endpoint (zero density, log undefined)")]
    EndpointSingular(&'static str),

    #[error("unreachable target support at state {state}")]
    UnreachableSupport { state: usize },

    #[error("bridge between {x} and {y} is undefined: R01(x,y) = 0")]
    UndefinedBridge { x: usize, y: usize },

    #[error("transition matrix has entry {value:e} below the clamp tolerance")]
    NegativeProbability { value: f64 },

    #[error("bridge-mixture residual {residual:e} exceeds tolerance {tol:e}")]
    MixtureResidual { residual: f64, tol: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
