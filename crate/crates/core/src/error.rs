use crate::region::SamplingError;
use crate::symbolic::{EvalError, Point, SymbolicError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Symbolic(#[from] SymbolicError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("chart mismatch: ({0}) vs ({1})")]
    ChartMismatch(String, String),
    #[error("degree mismatch: expected {expected}, found {found}")]
    DegreeMismatch { expected: usize, found: usize },
    #[error("unknown coordinate `{0}`")]
    UnknownCoordinate(String),
    #[error("precondition failed: {message}")]
    Precondition { message: String, witness: Option<Point> },
    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),
    #[error("coverage gap: {message}")]
    Coverage { message: String, witness: Option<Point> },
    #[error("{0}")]
    Domain(String),
    #[error("gluing failed: {message}")]
    Gluing { message: String, witness: Option<Point> },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn precondition(message: impl Into<String>, witness: Option<Point>) -> Self {
        Error::Precondition {
            message: message.into(),
            witness,
        }
    }

    /// Sample point attached to the error, if any.
    pub fn witness(&self) -> Option<&Point> {
        match self {
            Error::Precondition { witness, .. }
            | Error::Coverage { witness, .. }
            | Error::Gluing { witness, .. } => witness.as_ref(),
            _ => None,
        }
    }
}
