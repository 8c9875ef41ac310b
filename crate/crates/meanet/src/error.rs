//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by the meanet library.
#[derive(Error, Debug)]
pub enum Error {
    /// A value violated an operation's preconditions (non-finite input,
    /// bad normalization, out-of-range label, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Tensor or layer dimensions do not chain.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A caller broke an API contract (stale trace, misaligned gradients,
    /// payload kind not matching the cloud mode, ...).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Inconsistent model or experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed dataset file. Reports the file and the byte offset or
    /// line number where parsing stopped.
    #[error("format error in {path} at {location}: {message}")]
    Format {
        path: String,
        location: String,
        message: String,
    },

    /// Threshold calibration failed because one side of the
    /// correct/wrong partition is empty.
    #[error("calibration error: {0}")]
    Calibration(String),

    /// Checkpoint file could not be written or read back faithfully.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
