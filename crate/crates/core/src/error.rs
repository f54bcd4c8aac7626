use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("division by zero in autodiff node {node}")]
    DivisionByZero { node: usize },

    #[error("backward root must be a scalar, got a vector of length {0}")]
    NonScalarRoot(usize),

    #[error("non-finite gradient in parameter block `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("sinkhorn did not converge after {iters} iterations (residual {residual:e})")]
    SinkhornNotConverged { iters: usize, residual: f64 },

    #[error("jump probability {prob} exceeds 1; reduce the time step")]
    JumpProbability { prob: f64 },

    #[error("malformed simplex vector (sum {sum})")]
    Simplex { sum: f64 },

    #[error("value {value} out of range: {what}")]
    OutOfRange { value: f64, what: &'static str },

    #[error("csv line {line}: {msg}")]
    Csv { line: u64, msg: String },

    #[error("unknown category `{label}` in column `{column}`")]
    UnknownCategory { column: String, label: String },

    #[error("io: {0}")]
    Io(String),

    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::DivisionByZero { .. }
                | Error::NonFiniteGradient(_)
                | Error::NonFinite(_)
                | Error::SinkhornNotConverged { .. }
                | Error::JumpProbability { .. }
        )
    }
}
