use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("argument {value} outside [-1, 1]")]
    Domain { value: f64 },
    #[error("invalid index (l={l}, m={m})")]
    Index { l: i64, m: i64 },
    #[error("theta={theta} rad is within {eps} rad of a pole")]
    PoleProximity { theta: f64, eps: f64 },
    #[error("invalid basis specification: {0}")]
    InvalidBasis(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("rank deficient least-squares system (condition number {cond:.3e})")]
    RankDeficient { cond: f64 },
    #[error("sector {sector} has {samples} samples, needs at least {required}")]
    UnderdeterminedSector {
        sector: usize,
        samples: usize,
        required: usize,
    },
    #[error("direction (theta={theta:.6}, phi={phi:.6}) outside the model field of view")]
    OutOfFov { theta: f64, phi: f64 },
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
