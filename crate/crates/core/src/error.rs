use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite integrand value at node y = {at}")]
    NonFiniteIntegrand { at: f64 },
    #[error("density is zero at y = {y} for observation {index}; loss is infinite")]
    InfiniteLoss { index: usize, y: f64 },
    #[error("design is rank deficient: min eigenvalue of XᵀX/n is {min_eigenvalue:e}")]
    RankDeficient { min_eigenvalue: f64 },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),
}

pub type Result<T> = std::result::Result<T, Error>;
