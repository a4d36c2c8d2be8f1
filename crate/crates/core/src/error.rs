use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("step called on a finished episode; call reset first")]
    StepAfterDone,

    #[error("unknown environment `{0}`")]
    UnknownEnv(String),

    #[error("replay buffer holds no sampleable segment")]
    EmptyBuffer,

    #[error("elite set is empty")]
    EmptyElites,

    #[error("invalid segment: {0}")]
    InvalidSegment(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
