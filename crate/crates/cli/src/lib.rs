//! Configuration, pipeline orchestration and report emission for the
//! `bubbler` command-line tool.

pub mod config;
pub mod emit;
pub mod pipeline;

pub use config::{parse_config, parse_config_str, RunConfig, Tolerances};
pub use emit::emit;
pub use pipeline::{run_pipeline, RunOutput, RunReport, Stage};
