use thiserror::Error;

/// Errors produced while building fields, planning, or fitting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration space: {0}")]
    InvalidSpace(String),

    #[error("invalid bump geometry on axis {axis}: inner {inner} must satisfy 0 < inner < outer = {outer}")]
    InvalidBump { axis: usize, inner: f64, outer: f64 },

    #[error("covariance matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point {0:?} lies outside the configuration space")]
    OutOfBounds(Vec<f64>),

    #[error("invalid CPT parameters: {0}")]
    InvalidParams(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("probabilities must sum to 1 (got {0})")]
    NotNormalized(f64),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("path endpoints differ by {distance} (tolerance {tolerance})")]
    EndpointMismatch { distance: f64, tolerance: f64 },

    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
