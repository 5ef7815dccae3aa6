//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed configuration: missing field, inverted bounds, bad value.
    #[error("configuration error: {0}")]
    Config(String),

    /// A sampled graph stayed degenerate through the retry budget.
    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),

    /// Scalar targets could not be mapped to the requested class count.
    #[error("unlabelable targets: {0}")]
    Unlabelable(String),

    /// Numerical failure (non-finite values, Cholesky breakdown).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Input exceeds a model capacity limit (features, classes, memory).
    #[error("capacity error: {0}")]
    Capacity(String),

    /// Caller violated an operation contract.
    #[error("contract error: {0}")]
    Contract(String),

    /// Parse failure in an external file (CSV, schema, config).
    #[error("parse error: {0}")]
    Parse(String),

    /// A metric was requested on data where it is undefined.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
