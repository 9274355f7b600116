use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("{step}: {rows} monomials exceed the capacity limit of {cap}")]
    Capacity { step: String, rows: u128, cap: usize },

    #[error("rank deficiency: {columns} data columns do not exceed the retained rank {rank}\n{table}")]
    RankDeficient {
        columns: usize,
        rank: usize,
        table: String,
    },

    #[error("non-finite values in {step}; rescale the outputs or lower the exponent bounds")]
    NumericalOverflow { step: String },

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("state diverged in series {series} at t = {t}")]
    Divergence { series: i64, t: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("model validation failed: {0}")]
    Validation(String),

    #[error("format error in series {series} at t = {t}: {message}")]
    Format {
        series: i64,
        t: i64,
        message: String,
    },

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable code, used by the CLI on failure.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "INVALID_INPUT",
            Error::DimMismatch { .. } => "DIM_MISMATCH",
            Error::Capacity { .. } => "CAPACITY",
            Error::RankDeficient { .. } => "RANK_DEFICIENT",
            Error::NumericalOverflow { .. } => "NUMERICAL_OVERFLOW",
            Error::DegenerateModel(_) => "DEGENERATE_MODEL",
            Error::Divergence { .. } => "DIVERGENCE",
            Error::Parse(_) => "PARSE",
            Error::Validation(_) => "VALIDATION",
            Error::Format { .. } => "FORMAT",
            Error::Generation(_) => "GENERATION",
            Error::Io(_) => "IO",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn dims(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimMismatch {
            context: context.into(),
            expected,
            found,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
