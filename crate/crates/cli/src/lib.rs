//! Command-line front end for `wickwz-core`: JSON configs in, CSV/JSON out.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 non-finite
//! solver state, 4 statistical check failed.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{run, Context};
pub use config::{Experiment, RunConfig};
pub use error::CliError;
