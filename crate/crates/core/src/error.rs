use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("{what} needs {requested} qubits but the cap is {cap}")]
    Resource {
        what: &'static str,
        requested: usize,
        cap: usize,
    },
    #[error("size mismatch: {0} vs {1} qubits")]
    SizeMismatch(usize, usize),
    #[error("matrix is not unitary (deviation {0:e})")]
    NotUnitary(f64),
    #[error("distribution is flagged unnormalized")]
    Unnormalized,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid partition: {0}")]
    Partition(String),
    #[error("internal consistency check failed: {0}")]
    Consistency(String),
    #[error("eigensolver did not converge after {iterations} iterations (residuals {residuals:?})")]
    NoConvergence { iterations: usize, residuals: Vec<f64> },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
