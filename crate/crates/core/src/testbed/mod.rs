//! Ground-truth systems, their Euler–Maruyama integration and training data.

mod dataset;
mod moments;
mod sde;

pub use dataset::{
    generate_dataset, integrate, DatasetConfig, InitBox, TrajectoryDataset, DATASET_MANIFEST,
};
pub use moments::{ou2d_transition, Moments};
pub use sde::{NoiseLaw, SdeId, SdeSpec, UpdateRule};
