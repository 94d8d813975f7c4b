//! Command-line pipeline around `redflag-core`: table ingestion, stage
//! artifacts, configuration, reporting and synthetic data.

pub mod artifacts;
pub mod config;
pub mod ingest;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use config::RunConfig;
pub use pipeline::{Pipeline, PipelineError, PipelineStage, RunOptions};
