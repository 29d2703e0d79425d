use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("field shape mismatch: {0}")]
    Shape(String),

    #[error("radius field must be strictly positive (min = {0})")]
    NonPositive(f64),

    #[error("derivative order {0} not supported (max 3 per direction, m+n <= 3)")]
    DerivativeOrder(usize),

    #[error("modulation solve: no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("modulation solve: singular Jacobian")]
    SingularJacobian,

    #[error("blowup reached or unstable step at tau = {tau} (min v = {min_v})")]
    Unstable { tau: f64, min_v: f64 },

    #[error("insufficient decay: {0}")]
    InsufficientDecay(String),

    #[error("config: {0}")]
    Config(String),

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error("eigensolver: {0}")]
    Eigen(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
