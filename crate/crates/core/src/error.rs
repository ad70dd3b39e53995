use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("numerical blow-up: drone {drone} has non-finite state at t = {time}")]
    NonFinite { drone: usize, time: f64 },

    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("backward already called on this graph")]
    BackwardTwice,

    #[error("non-finite loss during update")]
    NonFiniteLoss,

    #[error("empty rollout buffer")]
    EmptyBuffer,

    #[error("unknown mission `{0}`")]
    UnknownMission(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error("config serialize: {0}")]
    TomlSer(#[from] toml::ser::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
