//! Experiment harness for `mmflows`: configuration files, parameter sweeps
//! and deterministic CSV/JSON output.

pub mod cli;
pub mod config;
pub mod run;
