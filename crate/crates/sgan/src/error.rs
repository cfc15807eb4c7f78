use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("non-finite value produced by {op}: {detail}")]
    NonFinite { op: &'static str, detail: String },

    #[error("state space too large to enumerate: {states} states exceeds cap {cap}")]
    EnumerationCap { states: u128, cap: u128 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("file format error in {path}: {detail}")]
    Format { path: String, detail: String },

    #[error("checksum mismatch in {path}")]
    Checksum { path: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(detail: impl Into<String>) -> Self {
        Error::Shape(detail.into())
    }

    pub fn contract(detail: impl Into<String>) -> Self {
        Error::Contract(detail.into())
    }
}
