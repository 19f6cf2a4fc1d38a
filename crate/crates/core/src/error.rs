use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("order p = {0} is not supported (expected an even integer in 2..=16)")]
    UnsupportedOrder(i64),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("power {power} of the value at row {row}, column {col} overflows")]
    Overflow { row: usize, col: usize, power: u32 },

    #[error("cannot parse {value:?} as a number at row {row}, column {col}")]
    Parse {
        row: usize,
        col: usize,
        value: String,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("incompatible sketches: {0}")]
    IncompatibleSketch(String),

    #[error("strategy mismatch: estimator needs {expected} sketches, found {found}")]
    StrategyMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),

    #[error("malformed sketch file: {0}")]
    Format(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnsupportedOrder(_) | Error::InvalidParameter(_) | Error::Usage(_) => 2,
            Error::IncompatibleSketch(_)
            | Error::StrategyMismatch { .. }
            | Error::UnsupportedCombination(_) => 4,
            Error::DimensionMismatch { .. }
            | Error::NonFinite { .. }
            | Error::Overflow { .. }
            | Error::Parse { .. }
            | Error::Empty(_)
            | Error::Format(_)
            | Error::Io(_)
            | Error::Json(_) => 3,
        }
    }
}
