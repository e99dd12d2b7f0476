use thiserror::Error;

use crate::residuals::Group;

/// Failures of the pure analysis pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("empty input")]
    EmptyInput,

    #[error("record {index}: {reason}")]
    Domain { index: usize, reason: String },

    #[error("values are not sorted ascending")]
    NotSorted,

    #[error("missing group {0}")]
    MissingGroup(Group),

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("x must be strictly increasing and y nondecreasing")]
    NonMonotonicInput,

    #[error("x and y have different lengths ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },

    #[error("knee was not detected")]
    NotDetected,
}

pub type Result<T, E = AnalysisError> = std::result::Result<T, E>;
