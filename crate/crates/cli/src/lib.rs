//! Command-line front end: config resolution, dataset layout, the five
//! commands and the synthetic dataset generator.

pub mod bench;
pub mod cli;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod synth;
