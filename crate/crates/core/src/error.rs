//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for an array operation.
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A numeric computation produced or received a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Caller-supplied input violates a precondition.
    #[error("invalid input: {0}")]
    Input(String),

    /// Invalid configuration (hyperparameters, generator ranges, CLI flags).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A dataset record failed validation.
    #[error("data error for patient {patient_id}, field {field}: {message}")]
    Load {
        patient_id: String,
        field: &'static str,
        message: String,
    },

    /// Normalization statistics cannot be computed.
    #[error("stats error: {0}")]
    Stats(String),

    /// A ranking or clustering metric is undefined on the given input.
    #[error("metric error: {0}")]
    Metric(String),

    /// Checkpoint version or parameter shape mismatch.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// A file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// Training failed (divergence, non-finite gradients).
    #[error("training error: {0}")]
    Training(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
