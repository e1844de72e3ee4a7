use thiserror::Error;

use crate::wigner::NegativityReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("zero vector where a nonzero phase-space vector is required")]
    ZeroVector,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not symplectic (max |SᵀJS − J| = {residual:.3e})")]
    NotSymplectic { residual: f64 },

    #[error("subspace is not Lagrangian: {0}")]
    NotLagrangian(String),

    #[error("covariance matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    Asymmetric { asymmetry: f64 },

    #[error("covariance violates the uncertainty relation (min eigenvalue of V + iJ/2 is {min_eigenvalue:.3e})")]
    Uncertainty { min_eigenvalue: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("occupation {occupation} of mode {mode} does not fit below cutoff {cutoff}")]
    OccupationOutOfRange { mode: usize, occupation: usize, cutoff: usize },

    #[error("cutoff {cutoff} too small: retained norm {norm:.12}")]
    InsufficientCutoff { cutoff: usize, norm: f64 },

    #[error("mixture weights must be nonnegative and sum to 1 (sum = {sum})")]
    WeightSum { sum: f64 },

    #[error("incompatible states: {0}")]
    BackboneMismatch(String),

    #[error("truncation error: trace dropped to {trace:.9}")]
    Truncation { trace: f64 },

    #[error("grid or bins do not cover the state: captured mass {mass:.6} (expected {expected:.6})")]
    Coverage { mass: f64, expected: f64 },

    #[error("Fourier quadrature did not converge (extent {extent}, step {step}, boundary |Φ| = {boundary:.3e})")]
    NonConvergence { extent: f64, step: f64, boundary: f64 },

    #[error("Wigner function is negative (min {:.6e}, negativity volume {:.6e})", .0.min_value, .0.negativity_volume)]
    NegativeWigner(Box<NegativityReport>),

    #[error("transformation not realizable on this backbone: {0}")]
    Unrealizable(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("mode index {index} out of range 1..={modes}")]
    IndexOutOfRange { index: usize, modes: usize },

    #[error("normalization self-test failed: {0}")]
    SelfTest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors that describe the physics of the input (negativity, coverage,
    /// truncation) rather than a malformed request.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::NegativeWigner(_)
                | Error::Coverage { .. }
                | Error::Truncation { .. }
                | Error::InsufficientCutoff { .. }
                | Error::NonConvergence { .. }
                | Error::Uncertainty { .. }
                | Error::Unrealizable(_)
                | Error::Unsupported(_)
        )
    }
}
