use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid function has {found} values but the grid has {expected} interior nodes")]
    LengthMismatch { expected: usize, found: usize },

    #[error("operands live on different grids")]
    GridMismatch,

    #[error("non-finite value at node {index}")]
    NonFinite { index: usize },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("function is not on the unit L2 sphere (norm = {norm})")]
    NotOnManifold { norm: f64 },

    #[error("cannot retract the zero function")]
    ZeroRetraction,

    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolverNotConverged {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    EigenNotConverged { iterations: usize, residual: f64 },

    #[error("degenerate eigengap: lambda0 = {lambda0}, lambda1 = {lambda1}")]
    GapDegenerate { lambda0: f64, lambda1: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            e @ Error::AtIteration { .. } => e,
            e => Error::AtIteration {
                iteration,
                source: Box::new(e),
            },
        }
    }
}
