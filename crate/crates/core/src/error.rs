use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArg(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("wav error: {0}")]
    Wav(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("zero-energy reference signal")]
    ZeroEnergyReference,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code contract: 2 usage, 3 I/O, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Manifest(_) | Error::Checkpoint(_) | Error::Wav(_) => 3,
            Error::Numeric(_) => 4,
            _ => 2,
        }
    }
}

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
