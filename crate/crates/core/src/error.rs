use thiserror::Error;

use crate::diagram::{NodeId, ValidationReport};

#[derive(Debug, Error)]
pub enum DiagramError {
    #[error("malformed model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("diagram failed validation with {} error(s): {}", .0.errors.len(), .0.first_error())]
    Invalid(ValidationReport),
    #[error("strategy space size does not fit in 128 bits")]
    Overflow,
}

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("path space has {count} paths, above the cap of {cap}")]
    TooMany { count: u128, cap: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error("strategy space has {size} strategies, above the cap of {cap}")]
    TooMany { size: u128, cap: u128 },
    #[error("strategy space size does not fit in 128 bits")]
    Overflow,
    #[error("risk level {0} outside (0, 1]")]
    BadAlpha(f64),
    #[error("strategy does not cover decision node {0}")]
    MissingNode(NodeId),
    #[error("node {node}: {message}")]
    Malformed { node: NodeId, message: String },
    #[error("malformed strategy JSON: {0}")]
    Json(String),
}

#[derive(Debug, Error)]
pub enum FormulationError {
    #[error(transparent)]
    Paths(#[from] PathError),
    #[error(transparent)]
    Model(#[from] decprog_milp::ModelError),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("operation requires {0}")]
    Missing(&'static str),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Export(#[from] decprog_milp::LpFormatError),
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Milp(#[from] decprog_milp::SolveError),
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error("no incumbent to extract a strategy from")]
    NoIncumbent,
    #[error("active-path cut requested but the active path count is strategy dependent; supply it explicitly")]
    UnknownActivePaths,
    #[error("assignment for node {node} at information state {row} is ambiguous: {values:?}")]
    Ambiguous { node: NodeId, row: usize, values: Vec<f64> },
}

#[derive(Debug, Error)]
pub enum ParetoError {
    #[error("weight vector must be positive, got {0:?}")]
    BadWeights(Vec<f64>),
    #[error("weight vector has {got} entries for {expected} objectives")]
    WeightArity { got: usize, expected: usize },
    #[error("no objectives given")]
    NoObjectives,
    #[error("a tail objective needs a risk level")]
    MissingAlpha,
    #[error("solver stopped at a limit after {found} frontier point(s); the frontier is incomplete")]
    Incomplete { found: usize },
    #[error("frontier is empty")]
    EmptyFrontier,
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
}
