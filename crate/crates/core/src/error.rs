use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("sampling produced no points: {0}")]
    EmptySample(String),

    #[error("solver did not converge: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    NonConvergent { residual: f64, tol: f64 },

    #[error("quadrature did not settle: successive values differ by {0:.3e}")]
    Quadrature(f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
