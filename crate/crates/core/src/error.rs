use alloc::string::String;
use core::fmt;

/// Errors raised by the core engine.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A tensor shape did not match what an operation expects.
    Dimension { op: &'static str, axis: &'static str, expected: usize, found: usize },
    /// A precondition on the arguments was violated.
    Contract(String),
    /// A NaN or infinite value reached an optimizer.
    Divergence { param: usize },
    /// A fit or statistic has no well-defined answer on the given data.
    Degenerate(String),
    /// Unknown preset or catalogue entry.
    Catalogue(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, axis, expected, found } => {
                write!(f, "{op}: dimension mismatch on {axis} (expected {expected}, found {found})")
            }
            Error::Contract(msg) => write!(f, "contract violated: {msg}"),
            Error::Divergence { param } => write!(f, "non-finite gradient in parameter {param}"),
            Error::Degenerate(msg) => write!(f, "degenerate input: {msg}"),
            Error::Catalogue(msg) => write!(f, "unknown catalogue entry: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::Contract(alloc::format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
