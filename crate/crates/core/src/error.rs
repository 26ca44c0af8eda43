use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("polytope is unbounded")]
    Unbounded,

    #[error("not an interior point")]
    NotInterior,

    #[error("{what} exceeds limit {limit} (got {got})")]
    TooLarge {
        what: &'static str,
        limit: usize,
        got: usize,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("Newton iteration did not converge in barrier stage {stage} after {iterations} iterations")]
    NewtonFailure { stage: usize, iterations: usize },

    #[error("non-finite objective at iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },

    #[error("ellipsoid is not inside the polytope: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
