//! Robust estimation for interval-monitored simple step-stress accelerated
//! life tests under proportional hazards with polynomial baseline hazards.
//!
//! The crate covers the full inference pipeline:
//!
//! - [`model`]: step-stress lifetime model (baseline hazards, shifting time,
//!   reliability, multinomial cell probabilities, analytic Jacobian);
//! - [`estimate`]: density-power-divergence loss, its score, the minimum DPD
//!   estimator over a beta grid, sandwich covariances and Wald intervals;
//! - [`characteristics`]: mean lifetime, reliability, hazard rate and
//!   quantiles under normal operating conditions with delta-method intervals;
//! - [`simulate`]: conditional-binomial data generation, cell contamination,
//!   adjusted residuals and a seeded, parallel Monte Carlo RMSE harness.

pub mod characteristics;
pub mod error;
pub mod estimate;
pub mod model;
pub(crate) mod quad;
pub mod simulate;
pub(crate) mod solver;

pub use error::{Error, Result};
pub use model::{
    acceleration_factor, cell_prob_jacobian, cell_probabilities, cumulative_hazard,
    shifting_time, step_reliability, BaselineHazard, BaselineKind, CellProbabilities,
    GroupedCounts, ModelParams, StepStressDesign,
};
