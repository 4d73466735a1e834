use thiserror::Error;

/// Errors raised by the selection library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("game validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("invalid preconditioner configuration: {0}")]
    InvalidConfig(String),

    #[error("inner loop reached its cap of {cap} iterations at outer step {k} with eps_k = {eps:e}")]
    InnerCapReached { k: usize, cap: usize, eps: f64 },

    #[error("resolvent evaluation did not reach tolerance {tol:e} within {cap} iterations")]
    ResolventNotConverged { tol: f64, cap: usize },

    #[error("oracle did not converge: {0}")]
    OracleNotConverged(String),

    #[error("infeasible oracle problem: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
