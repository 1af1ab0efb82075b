//! Configuration and the staged generate / train / simulate / diagnose / report pipeline.

mod config;
mod pipeline;
mod report;

pub use config::{DiagnosticsConfig, Estimator, ExperimentConfig, GridSpec, Scale, SCHEMA_VERSION};
pub use pipeline::{
    member_dir, run_stage, stage_complete, ArtifactDigest, RunManifest, RunOptions, Stage, CONFIG_FILE,
};
pub use report::{build_report, Summary};
