use thiserror::Error;

/// Errors raised by the laboratory. Construction-time validation failures are
/// `InvalidSpec`/`InvalidConfig`; everything else is a runtime failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid config at `{path}`: {reason}")]
    InvalidConfig { path: String, reason: String },

    #[error("support too large: {size} points exceeds the limit of {limit}")]
    SupportTooLarge { size: u128, limit: u128 },

    #[error("empty batch")]
    EmptyBatch,

    #[error("label {0} is not in {{-1, +1}}")]
    NonBinaryLabel(f64),

    #[error("empty nice set for direction `{0}`")]
    EmptyNiceSet(String),

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument { name, reason: reason.into() }
    }

    /// True for errors caused by user-supplied configuration rather than by
    /// a failure while running.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument { .. }
                | Error::InvalidSpec(_)
                | Error::InvalidConfig { .. }
                | Error::UnknownExperiment(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
