use std::path::PathBuf;

use decprog::diagram::ValidationReport;
use decprog::error::{DiagramError, FormulationError, ParetoError, PathError, SolveError, StrategyError};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid argument: {0}")]
    Usage(String),
    #[error("diagram failed validation: {}", .0.first_error())]
    Invalid(ValidationReport),
    #[error("model is infeasible")]
    Infeasible,
    #[error("solver stopped at a limit without a feasible strategy")]
    NoSolution,
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Pareto(#[from] ParetoError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Paths(#[from] PathError),
    #[error(transparent)]
    Diagram(#[from] DiagramError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Parse { .. } | Self::Io { .. } | Self::Usage(_) => EXIT_INPUT,
            Self::Infeasible => EXIT_INFEASIBLE,
            _ => EXIT_FAILURE,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }
}
