use thiserror::Error;

/// Errors raised by the sampling, path, estimator and analysis layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter violates its documented range. `key` names the offending setting.
    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested generator does not support the given (alpha, beta, d) regime.
    #[error("unsupported regime: {0}")]
    Regime(String),

    /// The trial function was non-positive (or non-finite) at a visited point.
    #[error("trial function not positive at x = {position} (replica {replica})")]
    TrialDomain { position: f64, replica: u64 },

    /// A regression could not be carried out.
    #[error("fit error: {0}")]
    Fit(String),

    /// All weights vanished, so no estimate is defined.
    #[error("degenerate estimate: {0}")]
    Degenerate(String),

    /// Path weights overflowed for too many replicas.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn config(key: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
