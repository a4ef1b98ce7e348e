use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e}, tolerance {tol:e})")]
    NotPsd { min_eigenvalue: f64, tol: f64 },

    #[error("matrix is singular (min eigenvalue {min_eigenvalue:e}, rank tolerance {tol:e})")]
    SingularMatrix { min_eigenvalue: f64, tol: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("parameter {name} = {value} out of range: {requirement}")]
    ParamRange {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },

    #[error("overflow evaluating f at {0}")]
    Overflow(f64),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("index {index} out of range for {len} columns")]
    IndexOutOfRange { index: usize, len: usize },
}

impl Error {
    pub(crate) fn range(name: &'static str, value: f64, requirement: &'static str) -> Self {
        Error::ParamRange {
            name,
            value,
            requirement,
        }
    }
}
