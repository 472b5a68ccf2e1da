//! Error types shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or network dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A numeric precondition failed (non-finite value, negative threshold, ...).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Bad input data (unseen category, unparseable cell, empty column, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Schema declaration inconsistent with the table it is applied to.
    #[error("schema error: {0}")]
    Schema(String),

    /// Encoded row width does not match the recorded layout.
    #[error("layout error: {0}")]
    Layout(String),

    /// Invalid argument to an operation.
    #[error("argument error: {0}")]
    Argument(String),

    /// Mismatched artifacts wired together (estimator vs schema width, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Checkpoint or workload file could not be read or written.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Checkpoint or workload file did not parse.
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
