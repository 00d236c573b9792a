use thiserror::Error;

pub type Result<T, E = LssError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LssError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("history is empty")]
    EmptyHistory,

    #[error("state {0:?} is already recorded in the history")]
    DuplicateState(Vec<f64>),

    #[error("state {0:?} is not present in the history")]
    UnknownState(Vec<f64>),

    #[error("insufficient history: need at least {needed} records, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("cannot draw {requested} items from a pool of {available}")]
    PoolExhausted { requested: usize, available: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl LssError {
    pub fn config(msg: impl Into<String>) -> Self {
        LssError::Config(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        LssError::InvalidInput(msg.into())
    }
}
