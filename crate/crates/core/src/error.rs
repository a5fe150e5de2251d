//! Crate-wide error type.
//!
//! Numerical code fails in a small number of recurring ways (shape mismatch,
//! non-finite values, empty selections, malformed input files); each gets a
//! dedicated variant so callers can match on the failure class instead of
//! string-parsing messages.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor or batch had the wrong dimensions for the requested operation.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: String,
        got: String,
    },

    /// A NaN or infinity appeared where a finite number is required.
    /// `context` names the offending quantity (e.g. a parameter block).
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A filter or sampling step produced an empty set where at least one
    /// element is required. The message names the selection that came up empty.
    #[error("empty selection: {0}")]
    EmptySelection(String),

    /// A CSV input could not be parsed; `line` is 1-based and includes the
    /// header row so it matches what editors display.
    #[error("csv error at line {line}: {message}")]
    CsvParse { line: u64, message: String },

    /// Importance weights degenerated (all zero / non-finite) during an
    /// optimization run.
    #[error("degenerate weights at iteration {iteration}: {message}")]
    DegenerateWeights { iteration: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Shorthand for `ShapeMismatch` with formatted endpoints.
    pub fn shape(context: &str, expected: impl std::fmt::Display, got: impl std::fmt::Display) -> Self {
        Error::ShapeMismatch {
            context: context.to_string(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
