use thiserror::Error;

pub type Result<T, E = OpadError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum OpadError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("regime violation: {0}")]
    Regime(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    /// The unlabelled pool cannot supply a full candidate set.
    #[error("unlabelled pool exhausted: need {needed}, have {available}")]
    EndOfEpisode { needed: usize, available: usize },

    #[error("{context}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl OpadError {
    pub fn config(msg: impl Into<String>) -> Self {
        OpadError::Config(msg.into())
    }

    pub fn integrity(msg: impl Into<String>) -> Self {
        OpadError::Integrity(msg.into())
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        OpadError::Io {
            context: context.into(),
            source,
        }
    }
}
