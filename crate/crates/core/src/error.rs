use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("graph contains a directed cycle")]
    Cycle,

    #[error("singular design: predictors of node {node} are collinear")]
    SingularDesign { node: usize },

    #[error("degenerate residual variance for node {node}")]
    DegenerateVariance { node: usize },

    #[error("oracle limit exceeded: {0}")]
    LimitExceeded(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for failures that come from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularDesign { .. } | Error::DegenerateVariance { .. }
        )
    }
}
