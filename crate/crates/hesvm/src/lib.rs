//! Std companion of `hesvm-core`: CSV ingestion, run configuration, model,
//! key and ciphertext files, multi-threaded drivers, reports and the CLI
//! commands.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod f17;
pub mod model_file;
pub mod report;
pub mod runner;
pub mod synth;
pub mod workflow;

pub use error::{AppError, AppResult};
