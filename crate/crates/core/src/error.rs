//! Error types shared across the crate.

use thiserror::Error;

/// Errors surfaced while validating inputs or evaluating the model.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A parameter vector violates the parameter space (nonnegative baseline
    /// coefficients, positive stress coefficient, finiteness).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A test plan violates its structural constraints.
    #[error("invalid design: {0}")]
    InvalidDesign(String),

    /// Observed counts are inconsistent with the design they claim to follow.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// `exp(exponent)` is not representable as a finite f64.
    #[error("exponential overflow: exp({exponent}) is not finite")]
    ExpOverflow { exponent: f64 },

    /// A time argument was negative where a nonnegative one is required.
    #[error("negative time argument: {0}")]
    NegativeTime(f64),

    /// No admissible root of the shifting-time equation was found.
    #[error("shifting time not found: {0}")]
    ShiftingTime(String),

    /// A cell probability collapsed to zero or below (numerical degeneracy).
    #[error("cell probability not positive at cell {index}: {value}")]
    DegenerateCell { index: usize, value: f64 },

    /// The information matrix is singular or too ill-conditioned to invert.
    #[error("covariance not available: {0}")]
    Covariance(String),

    /// Adaptive quadrature could not reach the requested tolerance.
    #[error("quadrature did not converge: achieved {achieved:.3e}, required {required:.3e}")]
    Quadrature { achieved: f64, required: f64 },

    /// Optimization failed in a way that leaves no usable estimate.
    #[error("fit failed: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;
