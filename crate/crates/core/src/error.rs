use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate curb direction: {0}")]
    DegenerateFrame(String),

    #[error("trajectory too short: need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("invalid trajectory `{id}`: {reason}")]
    InvalidTrajectory { id: String, reason: String },

    #[error("insufficient duration: need {needed:.3} s, trajectory spans {got:.3} s")]
    InsufficientDuration { needed: f64, got: f64 },

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("degenerate motion: trajectory `{0}` has no moving segment")]
    DegenerateMotion(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance matrix is not positive definite (duplicate inputs with zero noise?)")]
    NotPositiveDefinite,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("model has no motion patterns")]
    NoPatterns,

    #[error("zero displacement: {0}")]
    ZeroDisplacement(&'static str),

    #[error("empty point sequence")]
    EmptySequence,

    #[error("unsupported model version {0}")]
    UnsupportedVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
