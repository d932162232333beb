use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the numerical modules (tensors, token shuffle, TAPE,
/// frame sampling).
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    LengthMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    Indivisible {
        context: &'static str,
        len: usize,
        divisor: usize,
    },
    EmptyOutput {
        context: &'static str,
    },
    NonFinite {
        context: &'static str,
    },
    InvalidConfig(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch {
                context,
                expected,
                found,
            } => write!(
                f,
                "{context}: expected shape {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::LengthMismatch {
                context,
                expected,
                found,
            } => write!(f, "{context}: expected length {expected}, found {found}"),
            Error::Indivisible {
                context,
                len,
                divisor,
            } => write!(f, "{context}: length {len} is not divisible by {divisor}"),
            Error::EmptyOutput { context } => write!(f, "{context}: output length would be zero"),
            Error::NonFinite { context } => write!(f, "{context}: non-finite value encountered"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
