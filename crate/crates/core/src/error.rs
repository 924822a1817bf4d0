use std::fmt;

use serde::{Deserialize, Serialize};

/// Why a support function was rejected as a member of the smooth, strictly convex even class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    NonpositiveSupport,
    HessianNotPd,
}

impl fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InvalidReason::NonpositiveSupport => f.write_str("nonpositive_support"),
            InvalidReason::HessianNotPd => f.write_str("hessian_not_pd"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MinkError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("invalid body at node {node}: {reason}")]
    InvalidBody { node: usize, reason: InvalidReason },

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("degenerate Wulff shape: {0}")]
    DegenerateWulff(String),

    #[error("not a critical point: residual {residual:e} exceeds {threshold:e}")]
    NotCritical { residual: f64, threshold: f64 },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("path left the admissible class: {0}")]
    InvalidPath(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl MinkError {
    pub(crate) fn shape(expected: usize, got: usize) -> Self {
        MinkError::Shape { expected, got }
    }
}

pub type Result<T, E = MinkError> = std::result::Result<T, E>;
