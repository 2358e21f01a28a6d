use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("polynomial parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("polynomial is not homogeneous (found degrees {0} and {1})")]
    NotHomogeneous(u32, u32),

    #[error("defining polynomial is identically zero")]
    ZeroPolynomial,

    #[error("unsupported variety: {0}")]
    Unsupported(String),

    #[error("point is off the variety: |F| = {residual:e} exceeds {tolerance:e}")]
    OffVariety { residual: f64, tolerance: f64 },

    #[error("singular point or chart failure: {0}")]
    Chart(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("non-finite value at sample {index}")]
    NonFinite { index: usize },

    #[error("Gram matrix numerically singular: condition number {condition:e}, smallest eigenvalue {min_eigenvalue:e}")]
    SingularGram { condition: f64, min_eigenvalue: f64 },

    #[error("matrix is not Hermitian positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("states are not linked to the same sample set: {0}")]
    Unlinked(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("diagnostic failed: {0}")]
    Diagnostic(String),

    #[error("persistence format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Sampling(_)
                | Error::NonFinite { .. }
                | Error::SingularGram { .. }
                | Error::Chart(_)
                | Error::Quadrature(_)
                | Error::Diagnostic(_)
                | Error::OffVariety { .. }
        )
    }
}
