use thiserror::Error;

/// Errors raised by the operator algebra, the discretization and the solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("index {index} out of range for dimension {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("invalid order: {0}")]
    InvalidOrder(String),

    #[error("spectrum outside the cone Gamma_{k} (margins {margins:?})")]
    ConeViolation { k: usize, margins: Vec<f64> },

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid problem data: {0}")]
    InvalidProblem(String),

    #[error("node {node} is not admissible (cone margins {margins:?})")]
    NotAdmissible { node: usize, margins: Vec<f64> },

    #[error("singular row {row} in assembled system")]
    SingularRow { row: usize },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("line search failed: {0}")]
    LineSearch(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("probe left the admissible cone: {0}")]
    ProbeExit(String),

    #[error("radial shooting failed: {0}")]
    Shooting(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
