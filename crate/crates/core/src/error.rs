use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: &'static str, index: usize },

    #[error("non-finite value in {context} at step {step}, index {index}")]
    NonFiniteAtStep {
        context: &'static str,
        step: usize,
        index: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A metric or potential was evaluated where `1 + alpha*|x|` is not positive.
    #[error("positivity violated: 1 + alpha*|x| = {value} at index {index}")]
    Positivity { index: usize, value: f64 },

    #[error("sign flip at step {step}, index {index}")]
    SignFlip { step: usize, index: usize },

    #[error("newton solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("training did not converge: residual {residual:e} exceeds {threshold:e}")]
    ResidualTooLarge { residual: f64, threshold: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures caused by the numerics of a run rather than its inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::NonFiniteAtStep { .. }
                | Error::Positivity { .. }
                | Error::SignFlip { .. }
                | Error::NotConverged { .. }
                | Error::ResidualTooLarge { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
