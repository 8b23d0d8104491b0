use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("numerical failure in interval {interval}: {reason}")]
    IntervalFailure { interval: usize, reason: String },

    #[error("state {state} received no posterior occupancy (expected {occupancy:e} s)")]
    StateStarvation { state: usize, occupancy: f64 },

    #[error("decoding failed at interval {0}: every path has zero probability")]
    Decode(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
