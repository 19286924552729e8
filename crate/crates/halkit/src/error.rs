//! Error type shared across the crate.

use thiserror::Error;

/// Everything that can go wrong in this crate.
#[derive(Debug, Error)]
pub enum HalError {
    /// A point coordinate fell outside the closed unit interval.
    #[error("coordinate {coord} of row {row} is {value}, outside [0,1]")]
    CoordinateOutOfDomain {
        row: usize,
        coord: usize,
        value: f64,
    },

    /// Vector or matrix shapes do not line up.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A caller-supplied argument is invalid for the stated reason.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The request is beyond what a brute-force or enumeration path can do.
    #[error("problem too large: {0}")]
    TooLarge(String),

    /// A non-finite value showed up mid-computation.
    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite { what: &'static str, iteration: usize },

    /// An iterative routine finished without its convergence certificate in a
    /// context that requires one.
    #[error("did not converge: {0}")]
    NotConverged(String),

    /// Input data violates a documented contract.
    #[error("bad data at row {row}: {reason}")]
    BadData { row: usize, reason: String },

    /// CSV layer failure.
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    /// Filesystem failure.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HalError>;
