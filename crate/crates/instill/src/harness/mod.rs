//! Run harness: CLI, configuration, synthetic data, metrics, persistence,
//! and plots. Everything here is plumbing around the library's math;
//! nothing below `training` depends on it.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod metrics;
pub mod oracle;
pub mod plot;
