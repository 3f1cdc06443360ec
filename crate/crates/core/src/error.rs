use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("positivity violated at row {row}: propensity {value} outside ({eps}, 1 - {eps})")]
    Positivity { row: usize, value: f64, eps: f64 },

    #[error("treatment arm {arm} has {have} rows, at least {need} required")]
    InsufficientArm { arm: u8, have: usize, need: usize },

    #[error("pseudo samples mix learners {first} and {second}")]
    MixedLearners { first: String, second: String },

    #[error("score kind mismatch: {0}")]
    ModeMismatch(String),

    #[error("all calibration weights are zero")]
    AllZeroWeights,

    #[error("degenerate construction: {0}")]
    Degenerate(String),

    #[error("{path}: no data rows")]
    NoDataRows { path: PathBuf },

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: row {row}, column `{column}`: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("{path}: row {row}: factual outcome y does not match the potential outcome of arm w")]
    Consistency { path: PathBuf, row: usize },

    #[error("model dump, line {line}: {message}")]
    Dump { line: usize, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
