use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A dimension vector was empty, contained a zero, or overflowed `usize`.
    #[error("invalid dimension vector {dims:?}: {reason}")]
    InvalidShape { dims: Vec<usize>, reason: &'static str },

    /// A multi-index component was outside `1..=d_k`, or had the wrong length.
    #[error("index {index:?} is out of range for shape {dims:?}")]
    IndexOutOfRange { index: Vec<usize>, dims: Vec<usize> },

    /// Two operands were required to share a shape and did not.
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },

    /// Flat data length does not equal the product of the dimensions.
    #[error("data length {found} does not match shape size {expected}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The estimated amount of work exceeds the configured budget.
    #[error("work estimate {estimate} exceeds budget {budget}")]
    BudgetExceeded { estimate: u128, budget: u128 },

    #[error("parameter {name} = {value} is outside its domain: {reason}")]
    Domain { name: &'static str, value: f64, reason: &'static str },

    #[error("numerical integrity check failed: {0}")]
    Numerical(String),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Format(err.to_string())
    }
}
