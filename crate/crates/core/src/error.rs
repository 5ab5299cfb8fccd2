use std::path::PathBuf;

use thiserror::Error;

/// Errors produced while validating models, assembling and solving the
/// design problems, and running simulations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: String,
        found: String,
    },

    #[error("{name} is not positive definite (minimum eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { name: String, min_eigenvalue: f64 },

    #[error("{name} is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { name: String, asymmetry: f64 },

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("index {index} out of range (valid: 0..{len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("weight matrix has nonzero entry {value:e} at ({row}, {col}) where the topology has no link")]
    MaskViolation { row: usize, col: usize, value: f64 },

    #[error("x = 0 is not strictly feasible for constraint {constraint}: offset {offset:e} >= bound {bound:e}")]
    InfeasibleStart {
        constraint: usize,
        offset: f64,
        bound: f64,
    },

    #[error("collaboration exhausted the budget of sensor {sensor}: collaboration cost {cost:e} >= budget {budget:e}")]
    BudgetExhausted { sensor: usize, cost: f64, budget: f64 },

    #[error("no stationary point of the equality-constrained problem")]
    NoStationaryPoint,

    #[error("{0} is numerically singular")]
    Singular(String),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dims(what: impl Into<String>, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
