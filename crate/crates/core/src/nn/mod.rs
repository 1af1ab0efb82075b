//! Small dense networks with hand-derived first and second order gradients.

mod activation;
mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod mlp;
mod roles;

pub use activation::{tanh, Activation};
pub use adam::{clip_global_norm, AdamHyper, AdamState};
pub use mlp::{Mlp, Tape};
pub use roles::{Critic, DetSubMap, NetRole, StochSubMap};

/// Default hidden layers: three layers of 20 units for scalar systems, 40 for planar ones.
pub fn default_hidden(dim: usize) -> Vec<usize> {
    let width = if dim == 1 { 20 } else { 40 };
    vec![width; 3]
}

/// Default noise input dimension `d + 4`.
pub fn default_noise_dim(dim: usize) -> usize {
    dim + 4
}
