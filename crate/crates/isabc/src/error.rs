//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },

    /// A port or grid index outside `1..=N`.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// An iterative estimator exhausted its budget. Carries the best
    /// estimate and its error bound so callers can decide what to do.
    #[error("did not converge: estimate {estimate} with error bound {error_bound} (target {target})")]
    NonConvergence {
        estimate: f64,
        error_bound: f64,
        target: f64,
    },

    /// A matrix failed a structural requirement (symmetry, unit diagonal, ...).
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    /// Configuration file or flag rejected, with the offending location.
    #[error("config error at line {line}, key `{key}`: {msg}")]
    Config {
        line: usize,
        key: String,
        msg: String,
    },

    /// Generic numeric failure with context.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain {
            op,
            msg: msg.into(),
        }
    }
}
