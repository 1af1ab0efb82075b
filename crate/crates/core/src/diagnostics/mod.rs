//! Simulation and comparison of learned and ground-truth dynamics.

mod compare;
mod estimators;
mod simulate;
pub mod tables;

pub use compare::{covariance_spectrum, w1_distance, Histogram, Histogram2d};
pub use estimators::{
    effective_drift_diffusion, grid_1d, lognormal_drift_diffusion, one_step_samples,
    reference_table, DriftDiffusionTable,
};
pub use simulate::{path_moments, simulate, simulate_from, PathEnsemble, PathMoments, SimOptions};
