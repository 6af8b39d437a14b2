use thiserror::Error;

/// Errors produced by grid construction, operator assembly and solvers.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// A precondition on the arguments was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A computation produced NaN or infinity.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A nonlinearity or driver misbehaved at a specific node or stage.
    #[error("numeric failure at {context}: {message}")]
    NumericAt { context: String, message: String },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
