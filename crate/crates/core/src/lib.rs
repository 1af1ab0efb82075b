//! Stochastic flow map learning for unknown stochastic dynamical systems.
//!
//! A learned one-step model is the sum of a residual mean map
//! `x + N(x)` fit with a recurrent multi-step loss ([`det`]) and a noise
//! map `S(x, z)` trained adversarially against a gradient-penalised
//! Wasserstein critic ([`gan`]). The [`testbed`] module supplies ground-truth
//! systems and training data, [`diagnostics`] compares learned and true
//! dynamics, and [`experiment`] wires everything into a staged pipeline.

pub mod blob;
pub mod det;
pub mod diagnostics;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod gan;
pub mod map;
pub mod nn;
pub mod rng;
pub mod testbed;

pub use error::{Error, Result};
