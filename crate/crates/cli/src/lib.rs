//! Command-line experiments: design, evaluate, simulate and sweep.

pub mod config;
pub mod error;
pub mod experiment;
pub mod run_dir;
