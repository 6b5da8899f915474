use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("variable {name} has invalid bounds [{lo}, {hi}]")]
    BadBounds { name: String, lo: f64, hi: f64 },
    #[error("row {row} references unknown variable index {index}")]
    UnknownVariable { row: String, index: usize },
    #[error("non-finite value in {what}")]
    NonFinite { what: String },
}

#[derive(Debug, Error)]
pub enum LpFormatError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("numerical failure in the LP relaxation: {0}")]
    Numerical(String),
    #[error("fixing refers to unknown variable index {0}")]
    UnknownVariable(usize),
    #[error("invalid solver parameter: {0}")]
    BadParameter(String),
}
