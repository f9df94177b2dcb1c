//! Error type shared by every module in the crate.

use alloc::string::String;
use core::fmt;

/// Failure classes line up with the CLI exit-code contract: `Shape`,
/// `Input`, `Spec`, `State` and `Format` are caller mistakes, `Numeric`
/// marks a non-finite value escaping an operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Tensor or grid dimensions do not line up.
    Shape(String),
    /// An argument is out of its documented range.
    Input(String),
    /// An architecture description is internally inconsistent.
    Spec(String),
    /// NaN or infinity where a finite value is required.
    Numeric(String),
    /// An operation was called with stale or missing captured state.
    State(String),
    /// A serialized byte stream does not match the documented layout.
    Format(String),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
    pub fn spec(msg: impl Into<String>) -> Self {
        Error::Spec(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(m) => write!(f, "shape error: {m}"),
            Error::Input(m) => write!(f, "input error: {m}"),
            Error::Spec(m) => write!(f, "spec error: {m}"),
            Error::Numeric(m) => write!(f, "numeric error: {m}"),
            Error::State(m) => write!(f, "state error: {m}"),
            Error::Format(m) => write!(f, "format error: {m}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
