//! Estimators for the aggregated update and their state-evolution predictions.

mod denoiser;
mod estimate;
mod quadrature;
mod state_evolution;

pub use denoiser::{bg_mmse_denoiser, bg_mmse, SignalPrior};
pub use estimate::{debiased_mse, error_stats, estimate, EstimatorConfig, EstimatorKind, RecoveryResult};
pub use quadrature::{expect_normal, expect_normal_even};
pub use state_evolution::{lmmse_mse, state_evolution, vseq_for_bound, SeTrace};
