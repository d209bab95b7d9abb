use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("system is not Schur stable (spectral radius {0:.6})")]
    Unstable(f64),

    #[error("clock offset {delta} s violates |delta| < h = {h} s")]
    OffsetOutOfRange { delta: f64, h: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("feedthrough matrix is singular and cannot be inverted")]
    SingularFeedthrough,

    #[error("pair is not stabilizable: {0}")]
    NotStabilizable(String),

    #[error("observer matrix A - LC is not Hurwitz (max real part {0:.6})")]
    NotHurwitz(f64),

    #[error("Riccati iteration did not converge after {iterations} steps (residual {residual:.3e})")]
    RiccatiDivergence { iterations: usize, residual: f64 },

    #[error("eigenvalue computation did not converge")]
    EigenFailure,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("verification failed: {0}")]
    Verification(String),
}

pub type Result<T> = std::result::Result<T, Error>;
