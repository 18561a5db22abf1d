use thiserror::Error;

/// Errors raised by the library.
///
/// The variants mirror how a caller should react: `Domain` means an argument
/// was out of range, `Contract` means inputs were inconsistent with each other
/// (dimension mismatch, crossing quantiles), `Numerical` means a solver gave up.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}
