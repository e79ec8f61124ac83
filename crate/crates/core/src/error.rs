use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("variable index {index} out of range for {n} variable(s)")]
    VariableOutOfRange { index: usize, n: usize },

    #[error("degree {degree} exceeds the available order {order}")]
    DegreeOverflow { degree: usize, order: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric (defect {defect:.3e})")]
    NotSymmetric { defect: f64 },

    #[error("invalid weights: {0}")]
    Weights(String),

    #[error("moment data is not tracial: word {word} has values {first} and {second}")]
    InconsistentMoment { word: String, first: f64, second: f64 },

    #[error("missing moment for word {0}")]
    MissingMoment(String),

    #[error("sequence is not normalized: y(1) = {0}")]
    NotNormalized(f64),

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("moment matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },

    #[error("moment matrix is not flat: rank M_(k-1) = {prev}, rank M_{k} = {rank}")]
    NotFlat { k: usize, prev: usize, rank: usize },

    #[error("no spanning set of columns of degree < {k} (found {found}, need {rank})")]
    BasisExtraction { k: usize, found: usize, rank: usize },

    #[error("tracial consistency violated: spread {spread:.3e} at word {word}")]
    Consistency { word: String, spread: f64 },

    #[error("operators are not symmetric after the GNS step (defect {defect:.3e})")]
    SymmetrizationDefect { defect: f64 },

    #[error("block decomposition did not converge within depth {depth}")]
    BlockDecomposition { depth: usize },

    #[error("residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    Residual { residual: f64, tol: f64 },

    #[error("no separating moment sequence: {0}")]
    NoWitness(String),

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
