//! Orchestration, configuration, method comparison and rendering for the
//! corsem pipeline.

pub mod commands;
pub mod compare;
pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod render;

pub use config::{Overrides, PipelineConfig};
pub use manifest::Manifest;
pub use pipeline::{run_pipeline, PipelineError};
