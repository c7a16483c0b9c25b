use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mesh construction failed: {0}")]
    Mesh(String),

    #[error("agglomeration layout mismatch: {0}")]
    Layout(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("interface space construction failed: {0}")]
    InterfaceSpace(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("smoother construction failed: {0}")]
    Smoother(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("krylov breakdown after {iterations} iterations")]
    Breakdown { iterations: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
