//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DuetError {
    #[error("degenerate 6d rotation: {0}")]
    DegenerateRotation(String),

    #[error("input is not a rotation matrix: {0}")]
    NotARotation(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("degenerate normalization stats: {0}")]
    DegenerateStats(String),

    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),

    #[error("invalid motion sequence: {0}")]
    InvalidSequence(String),

    #[error("invalid noise schedule parameters: {0}")]
    InvalidScheduleParams(String),

    #[error("timestep {t} out of range [1, {max}]")]
    TimestepOutOfRange { t: usize, max: usize },

    #[error("invalid timestep order: t={t} must be greater than t_prev={t_prev}")]
    InvalidTimestepOrder { t: usize, t_prev: usize },

    #[error("voxel grids live on different lattices")]
    LatticeMismatch,

    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    #[error("insufficient samples: need {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("file format version mismatch: {0}")]
    FormatVersionMismatch(String),

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),
}

pub type Result<T> = std::result::Result<T, DuetError>;

impl DuetError {
    pub fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        DuetError::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }
}
