use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("trajectories too short: {0}")]
    DataTooShort(String),
    #[error("sequence too short: {0}")]
    TooShort(String),
    #[error("initial condition too short: {0}")]
    InitTooShort(String),
    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),
    #[error("invalid observation proportion {0}")]
    InvalidProportion(f64),
    #[error("AR model is not stationary")]
    NotStationary,
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("training set is empty")]
    EmptyTrain,
    #[error("observation set is empty")]
    EmptyObservations,
    #[error("malformed file: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True for errors caused by numerical failure rather than bad input or I/O.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::NotStationary | Error::SingularSystem(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Format(_))
    }
}
