//! Crate-wide error type and result alias.

use std::fmt;

/// Errors surfaced by every fallible operation in the crate.
#[derive(Debug)]
pub enum Error {
    /// Tensor shape disagreement; carries both offending shapes.
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// Invalid caller-supplied data (bad label, out-of-range id, empty dataset).
    Input(String),
    /// Invalid configuration (bad key, inconsistent model dims, tau <= 0).
    Config(String),
    /// Broken internal contract (non-scalar loss, missing gradient, non-stochastic rows).
    Contract(String),
    /// Malformed on-disk artifact (checkpoint magic/version, truncation).
    Format(String),
    /// Text parse failure with 1-based line number.
    Parse { line: usize, message: String },
    /// Numeric failure during training or analysis (NaN/Inf loss).
    Numeric(String),
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, lhs, rhs } => {
                write!(f, "{op}: incompatible shapes {lhs:?} and {rhs:?}")
            }
            Error::Input(msg) => write!(f, "input error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
            Error::Io(err) => write!(f, "i/o error: {err}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
