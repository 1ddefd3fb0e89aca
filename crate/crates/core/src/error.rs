use thiserror::Error;

/// Errors produced by the propagation engine and its evaluators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("invalid size {size}: {reason}")]
    InvalidSize { size: usize, reason: &'static str },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("non-finite value: {0}")]
    NonFinite(&'static str),

    #[error("identity generator is not a valid imaginary-time gate")]
    IdentityGenerator,

    #[error("simulation diverged: identity coefficient {0}")]
    Diverged(f64),

    #[error("term count {count} exceeds configured cap {cap}")]
    TermLimit { count: usize, cap: usize },

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("system too large for dense oracle: {0}")]
    TooLarge(String),

    #[error("invalid config at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
