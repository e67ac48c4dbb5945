use thiserror::Error;

/// Errors produced by the simulation and sampling routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("spectral sum diverges: alpha = {alpha} must exceed the dimension {dim}")]
    Divergent { alpha: f64, dim: usize },

    #[error("exponential moment is not integrable: p*beta*sigma = {level} >= 1")]
    NonIntegrable { level: f64 },

    #[error("enumeration budget exceeded: {tuples} tuples > {budget}")]
    BudgetExceeded { tuples: u128, budget: u128 },

    #[error("degenerate experiment: {0}")]
    Degenerate(String),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
