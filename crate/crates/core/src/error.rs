//! Error type shared across the library.

/// Library-wide error enum. Variants map onto the CLI exit-code contract:
/// validation and insufficient-data problems are usage errors, numerical
/// integrity failures signal a corrupted computation, capacity errors mean
/// a dimension or combinatorial cap was exceeded.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation: {0}")]
    Validation(String),
    #[error("capacity: {0}")]
    Capacity(String),
    #[error("numerical integrity: {0}")]
    NumericalIntegrity(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
    pub fn capacity(msg: impl Into<String>) -> Self {
        Error::Capacity(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::NumericalIntegrity(msg.into())
    }
    pub fn insufficient(msg: impl Into<String>) -> Self {
        Error::InsufficientData(msg.into())
    }
}
