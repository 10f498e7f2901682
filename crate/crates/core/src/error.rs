use thiserror::Error;

/// Errors raised by the solvers and their building blocks.
///
/// Non-convergence of an iterative solver is not an error: it is reported
/// through [`crate::report::SolveStatus`] together with the iteration trace.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("singular T-Sylvester operator (reciprocal condition estimate {rcond:.3e})")]
    SingularOperator { rcond: f64 },

    #[error("generalized Schur decomposition failed (LAPACK info = {0})")]
    QzFailed(i32),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("dimension {n} exceeds the Kronecker oracle cap {cap}")]
    OverOracleCap { n: usize, cap: usize },

    #[error("eigenvalue iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("Krylov basis breakdown at step {step}: {detail}")]
    Breakdown { step: usize, detail: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("matrix market: {0}")]
    MatrixMarket(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::ShapeMismatch(msg.into())
}
