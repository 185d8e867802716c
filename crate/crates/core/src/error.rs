use thiserror::Error;

/// Failure modes shared by every module.
///
/// `Precondition` covers inputs that violate a documented requirement
/// (branch cut, missing zero eigenvalue, bad dimensions). `Numerical`
/// covers failures of an algorithm on admissible input.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub fn num(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Precondition(_) => 2,
            Error::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
