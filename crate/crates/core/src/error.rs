use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("washout: D_bar = {d_bar} must be below mu_max = {mu_max}")]
    Washout { d_bar: f64, mu_max: f64 },

    #[error("quadrature did not converge on [{a}, {b}] (estimate {estimate:e}, error {error:e})")]
    Quadrature {
        a: f64,
        b: f64,
        estimate: f64,
        error: f64,
    },

    #[error("nonconvergence after {iterations} iterations (residual {residual:e}): {reason}")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        reason: String,
    },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("switch structure error: {0}")]
    Structure(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn is_nonconvergence(&self) -> bool {
        matches!(self, Error::NonConvergence { .. })
    }
}
