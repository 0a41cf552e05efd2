use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid interval ({lo}, {hi})")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("invalid scale function: {0}")]
    InvalidScale(String),

    #[error("invalid speed measure: {0}")]
    InvalidMeasure(String),

    #[error("point or set outside the domain: {0}")]
    DomainMismatch(String),

    #[error("family direction mismatch: expected {expected}, found {found}")]
    DirectionMismatch { expected: String, found: String },

    #[error("family is not nested at index {index}")]
    NotNested { index: usize },

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("degenerate scale: every grid cell carries zero scale increment")]
    DegenerateScale,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("incompatible grids: {0}")]
    IncompatibleGrids(String),

    #[error("state count {0} exceeds the dense-exponential limit")]
    TooManyStates(usize),

    #[error("support condition violated: {0}")]
    SupportViolation(String),

    #[error("invalid initial law: {0}")]
    InvalidLaw(String),

    #[error("empty sample")]
    EmptySample,

    #[error("requested horizon {requested} exceeds path horizon {available}")]
    HorizonExceeded { requested: f64, available: f64 },

    #[error("scale map is not strictly increasing on the states")]
    NonStrictTransform,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
