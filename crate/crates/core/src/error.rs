use alloc::string::String;

/// Errors produced by the tracking core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value violated an operation's precondition.
    #[error("invalid input: {0}")]
    Input(String),
    /// A numeric routine could not complete (singular matrix, non-finite value).
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn input(msg: impl Into<String>) -> Error {
    Error::Input(msg.into())
}

pub(crate) fn numeric(msg: impl Into<String>) -> Error {
    Error::Numeric(msg.into())
}
