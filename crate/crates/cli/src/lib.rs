//! Command-line driver for simulation, estimation, denoising, eigenimage
//! export and timing of the steerable covariance estimator.

pub mod commands;
pub mod config;
pub mod plot;

pub use commands::run;
pub use config::{Command, Flags, RunConfig, Selection};
