use thiserror::Error;

pub type Result<T, E = LogTsError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LogTsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid arm set: {0}")]
    InvalidArms(String),

    #[error("degenerate instance: {0}")]
    Degenerate(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("operation requires at least one pull")]
    EmptyHistory,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "rejection budget exhausted after {draws} draws: complexity band [{band_lo}, {band_hi}], achieved range [{seen_lo}, {seen_hi}]"
    )]
    RejectionExhausted {
        draws: usize,
        band_lo: f64,
        band_hi: f64,
        seen_lo: f64,
        seen_hi: f64,
    },

    #[error("run panicked: {0}")]
    RunPanicked(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl LogTsError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        LogTsError::InvalidConfig(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        LogTsError::Degenerate(msg.into())
    }
}
