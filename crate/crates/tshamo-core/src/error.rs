use alloc::string::String;
use core::fmt;

/// Crate-wide error type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Operand shapes do not conform to a primitive's rule.
    Shape {
        primitive: &'static str,
        detail: String,
    },
    /// A primitive produced NaN or Inf.
    NonFinite { primitive: &'static str },
    /// Any other contract violation (bad argument, wrong role, mismatched
    /// configuration, out-of-range step index, ...).
    Invalid(String),
}

impl Error {
    pub fn shape(primitive: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            primitive,
            detail: detail.into(),
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { primitive, detail } => {
                write!(f, "shape mismatch in `{primitive}`: {detail}")
            }
            Error::NonFinite { primitive } => {
                write!(f, "`{primitive}` produced a non-finite value")
            }
            Error::Invalid(msg) => write!(f, "{msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
