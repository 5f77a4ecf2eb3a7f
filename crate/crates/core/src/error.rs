use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("format error: {0}")]
    Format(String),

    /// A caller broke an operation's precondition (shape mismatch, empty mask, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    /// The simulation detected a broken state invariant. The message carries a state dump.
    #[error("invariant breach: {0}")]
    InvariantBreach(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invalid comparison: {0}")]
    InvalidComparison(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
