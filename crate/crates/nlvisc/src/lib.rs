//! Experiment runner for the nonlocal viscosity toolkit: configuration files,
//! CSV and report formats, and the six experiment kinds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod io;

pub use config::{Config, Overrides};
pub use error::CliError;
pub use experiments::{describe, run, Check, Outcome};
