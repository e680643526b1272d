use thiserror::Error;

use crate::solver::Solution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// `XᵀX` could not be factorized, so leverage scores are undefined.
    #[error("Gram matrix XᵀX is singular")]
    SingularGram,

    /// A Hessian that must be inverted is not positive definite. For subsample
    /// Hessians this is the complement of the invertibility event.
    #[error("Hessian is singular (not positive definite)")]
    SingularHessian,

    /// Every sampling score is zero.
    #[error("sampling scores are all zero; no probability plan can be formed")]
    DegeneratePlan,

    /// Newton's method stopped without meeting the tolerance. Carries the best iterate.
    #[error(
        "Newton solver did not converge after {} iterations (gradient norm {:e}, |θ| = {:e})",
        .0.iterations, .0.grad_norm, .0.theta.norm()
    )]
    NoConvergence(Box<Solution>),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
