use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is rank deficient (numerical rank {rank} < {cols})")]
    RankDeficient { rank: usize, cols: usize },

    #[error("iteration did not converge after {iterations} steps")]
    NoConvergence { iterations: usize },

    #[error("bad parameter: {0}")]
    BadParameter(String),

    #[error("not a fusion frame: lower frame bound {lower:e} is not positive")]
    NotAFrame { lower: f64 },

    #[error("sigma-delta iteration requires an unweighted frame (weight {weight} at index {index})")]
    WeightedFrame { index: usize, weight: f64 },

    #[error("infeasible stability parameters: {0}")]
    Infeasible(String),

    #[error("bad data: {0}")]
    BadData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
