use thiserror::Error;

/// Errors produced by tensor, decomposition, and fitting routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("index {index} out of range for {context} (d = {d})")]
    IndexOutOfRange {
        index: usize,
        d: usize,
        context: &'static str,
    },

    #[error("dense element guard exceeded: {elements} elements > limit {limit}")]
    GuardExceeded { elements: usize, limit: usize },

    #[error("degenerate ranks: requested {requested:?}, feasible {feasible:?}")]
    DegenerateRanks {
        requested: (Vec<usize>, Vec<usize>),
        feasible: (Vec<usize>, Vec<usize>),
    },

    #[error("edge cache does not belong to this point (cache id {cache}, point id {point})")]
    StaleCache { cache: u64, point: u64 },

    #[error("linear solve failed: {0}")]
    SingularSystem(String),

    #[error("state solver did not converge: residual {residual:.3e} after {iters} iterations")]
    StateSolve { residual: f64, iters: usize },

    #[error("invalid model container: {0}")]
    BadContainer(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
