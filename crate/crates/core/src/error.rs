use thiserror::Error;

use crate::grid::Tick;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("record has {found} dimensions but the geometry has {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("value {value} in dimension {dim} is outside [0, 1]")]
    OutOfRange { dim: usize, value: f64 },

    #[error("tick {later} precedes tick {earlier}")]
    TimeReversed { earlier: Tick, later: Tick },

    #[error("record tick {found} does not match the engine clock {expected}")]
    TickMismatch { expected: Tick, found: Tick },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{0}")]
    InsufficientData(String),

    #[error("{0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
