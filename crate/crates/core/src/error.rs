use thiserror::Error;

use crate::matcore::PsdCertificate;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("arithmetic overflow computing {what}")]
    Overflow { what: &'static str },

    #[error("weight table too small: need (n={n}, k={k}), table covers (n<={n_max}, k<={k_max})")]
    WeightTableTooSmall { n: usize, k: usize, n_max: usize, k_max: usize },

    #[error("matrix must be square, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is not hermitian (relative asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("eigen-decomposition did not converge after {iterations} iterations")]
    EigenFailed { iterations: usize },

    #[error("{what} is not positive semidefinite (min eigenvalue {:.6e})", .certificate.min_eigenvalue)]
    NotPsd { what: String, certificate: Box<PsdCertificate> },

    #[error("factorization residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    IllConditioned { residual: f64, tolerance: f64 },

    #[error("pairing is not isometric (Gram mismatch {mismatch:.3e})")]
    NonIsometric { mismatch: f64 },

    #[error("pair does not commute (commutator norm {norm:.3e})")]
    NotCommuting { norm: f64 },

    #[error("{what} is not a contraction (norm {norm:.12})")]
    NotContraction { what: String, norm: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("internal inconsistency: {0}")]
    Internal(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// True for failures caused by numerical breakdown rather than bad input
    /// or a negative mathematical verdict.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::EigenFailed { .. } | Error::IllConditioned { .. } | Error::Internal(_) | Error::Overflow { .. }
        )
    }
}
