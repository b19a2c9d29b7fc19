use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller-side problem: mismatched dimensions, empty data, invalid parameter.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Covariance factorization failed even at the maximum jitter level.
    /// `minor` is the order of the first non-positive leading principal minor.
    #[error("matrix not positive definite (leading minor of order {minor}, max jitter {max_jitter:e})")]
    NotPositiveDefinite { minor: usize, max_jitter: f64 },

    /// A numerical contract was violated (e.g. variance below tolerance).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Hyperparameter optimization could not produce any usable candidate.
    #[error("fit failed: {0}")]
    Fit(String),

    /// Simulated dynamics produced a non-finite state.
    #[error("simulation diverged at step {step}")]
    Divergence { step: usize },

    /// Experiment configuration is malformed.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
