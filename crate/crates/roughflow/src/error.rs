use thiserror::Error;

/// Crate-wide error type. Validation errors mean the request was malformed
/// before any numerics ran; numerical errors mean the computation itself
/// broke down (blow-up, failed factorisation).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code used by the command line front end: validation
    /// problems exit 2, numerical breakdowns exit 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_) | Error::Config(_) => 2,
            Error::Numerical(_) | Error::Io(_) => 3,
        }
    }
}
