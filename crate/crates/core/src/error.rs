use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("response outside the loss domain: {0}")]
    Domain(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("intercept is unbounded: {0}")]
    UnboundedIntercept(String),

    #[error("solver diverged: {0}")]
    Divergence(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("penalty weights must be strictly positive for a killer lower bound")]
    ZeroWeights,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
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
