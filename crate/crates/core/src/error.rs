use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("row {row} of the mixing matrix sums to {sum} (expected 1)")]
    NotRowStochastic { row: usize, sum: f64 },

    #[error("invalid mixing matrix: {0}")]
    InvalidMatrix(String),

    #[error("topology generation failed: {0}")]
    GenerationFailure(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },

    #[error("invalid weight vector: {0}")]
    InvalidWeight(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("diagonal estimate {value:e} at node {node} after {rounds} rounds is below the floor")]
    SmallDiagonal { node: usize, rounds: usize, value: f64 },

    #[error("zero diagonal [A^{k}]_{node}{node}")]
    ZeroDiagonal { k: usize, node: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Numerical breakdowns (tiny diagonals, solver non-convergence) as
    /// opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SmallDiagonal { .. } | Error::ZeroDiagonal { .. } | Error::ConvergenceFailure { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
