//! Gaussian-process surrogate and expected-improvement acquisition.

mod ei;
pub mod normal;
mod qei;
mod regression;
mod sga;

pub use ei::{confidence_interval, expected_improvement, expected_improvement_gradient};
pub use qei::{
    cholesky_derivative, cholesky_lower, qei_gradient, qei_monte_carlo, McEstimate, QBatch,
    QeiContext, JOINT_JITTER,
};
pub use regression::{gp_fit, gp_posterior, GpState, KernelParams};
pub use sga::{multistart_sga, SgaParams};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GpError {
    #[error("cannot fit a Gaussian process to zero observations")]
    NoData,
    #[error("noise jitter must be positive, got {0}")]
    NonPositiveJitter(f64),
    #[error("kernel hyperparameters must be positive")]
    InvalidHyperparameters,
    #[error("expected {expected}-dimensional points, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("covariance matrix is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("a batch needs at least one point")]
    EmptyBatch,
}
