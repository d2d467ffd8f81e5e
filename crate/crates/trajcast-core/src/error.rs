use alloc::string::String;
use core::fmt;

/// Errors surfaced by the core library.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Shape disagreement between tensors, naming the offending operation.
    Dimension { op: &'static str, detail: String },
    /// Token or id outside the vocabulary.
    Vocabulary(String),
    /// An API contract was violated (e.g. backward on a non-scalar).
    Contract(String),
    /// Invalid configuration value.
    Config(String),
    /// Record violates the data schema (e.g. a flag on a non-lab event).
    Schema(String),
    /// Dataset unusable for the requested operation.
    Data(String),
    /// Non-finite value encountered during optimization.
    Numeric { step: usize, block: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, detail } => write!(f, "dimension error in {op}: {detail}"),
            Error::Vocabulary(msg) => write!(f, "vocabulary error: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Config(msg) => write!(f, "invalid config: {msg}"),
            Error::Schema(msg) => write!(f, "schema error: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Numeric { step, block } => {
                write!(f, "numeric failure at step {step} in parameter block {block}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
