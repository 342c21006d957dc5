use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("layout exceeds grid bounds: {0}")]
    OutOfBounds(String),

    #[error("unknown activity source id {0}")]
    UnknownSource(usize),

    #[error("voltage drop {drop:.4} V reaches nominal supply {nominal:.4} V (fault regime)")]
    FaultRegime { drop: f64, nominal: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("trace file format: {0}")]
    Format(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
