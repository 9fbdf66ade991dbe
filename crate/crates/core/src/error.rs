use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: expected {expected} entries, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("dimension {n} exceeds the dense oracle limit of {limit}")]
    OracleTooLarge { n: usize, limit: usize },

    #[error("table length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("downset needs at least one generator")]
    EmptyGenerators,

    #[error("{0} is not a member of the downset")]
    NotAMember(String),

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("zeroth coordinate of A*w is {0}, cannot normalize")]
    DegenerateNormalization(f64),

    #[error("test function bound violated: {0}")]
    EllBoundViolated(String),

    #[error("subset of size {size} exceeds the kernel cap {cap}")]
    SubsetTooLarge { size: usize, cap: usize },

    #[error("filter mass estimate {0:.4} is below 1/4; far-set guarantee violated")]
    UpsilonTooSmall(f64),

    #[error("estimator needs {required} samples but only {available} are available")]
    InsufficientSamples { required: usize, available: usize },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
