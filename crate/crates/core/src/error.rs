use thiserror::Error;

/// Errors raised by models, solvers and the scenario runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("fixed-point iteration did not converge at t = {time} after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        time: f64,
        iterations: usize,
        residual: f64,
    },
    #[error("negative state {value:e} in {component} at t = {time}")]
    NegativeState {
        component: &'static str,
        time: f64,
        value: f64,
    },
    #[error("dominating rate {bound} exceeded by {rate} at t = {time}")]
    BoundViolation { time: f64, rate: f64, bound: f64 },
    #[error("population cap {cap} exceeded at t = {time}")]
    PopulationCap { time: f64, cap: usize },
    #[error("root not bracketed: {0}")]
    NoBracket(String),
    #[error("covariance matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemiDefinite { min_eigenvalue: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Numerical failures map to exit code 3, everything else to 2.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::NegativeState { .. }
                | Error::BoundViolation { .. }
                | Error::PopulationCap { .. }
                | Error::NoBracket(_)
                | Error::NotPositiveSemiDefinite { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
