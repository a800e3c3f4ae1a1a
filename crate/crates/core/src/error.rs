use thiserror::Error;

/// Errors surfaced by the simulation core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite observation")]
    NonFiniteObservation,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("count overflow")]
    CountOverflow,

    #[error("normalize before any update")]
    NormalizeBeforeUpdate,

    #[error("empty list")]
    EmptyList,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite loss")]
    NonFiniteLoss,

    #[error("episode finished")]
    EpisodeFinished,

    #[error("invalid range: [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
