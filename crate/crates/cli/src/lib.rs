//! Experiment runner: resolves a flat key=value config plus flag overrides
//! into fully validated run parameters, executes the requested pipeline, and
//! writes plot-ready CSV/JSON outputs.

pub mod commands;
pub mod config;

pub use commands::CommandError;
pub use config::{Application, ConfigError, ExperimentConfig};

/// Process exit code for configuration errors.
pub const EXIT_CONFIG: i32 = 2;
/// Process exit code for diverging runs.
pub const EXIT_DIVERGENCE: i32 = 3;
