use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("embedding is rank deficient: pivot {pivot:.3e} relative to {scale:.3e}")]
    RankDeficient { pivot: f64, scale: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("transition operator is not stable: spectral radius {rho:.6}")]
    Unstable { rho: f64 },

    #[error("{what} did not converge after {iterations} iterations (last change {residual:.3e})")]
    NoConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },

    #[error("innovation covariance is singular (min eigenvalue {min_eig:.3e})")]
    SingularInnovation { min_eig: f64 },

    #[error("ordering violation at step {step}: min eigenvalue of difference {min_eig:.3e}")]
    OrderingViolation { step: usize, min_eig: f64 },

    #[error("assumption failed: {0}")]
    AssumptionFailed(String),

    #[error("incompatible meshes: N_f + 1 = {fine_plus_one} is not a multiple of N_c + 1 = {coarse_plus_one}")]
    IncompatibleMeshes {
        fine_plus_one: usize,
        coarse_plus_one: usize,
    },

    #[error("implicit step operator is singular")]
    SingularStep,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
