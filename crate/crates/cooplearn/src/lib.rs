//! File formats, parallel execution and the command line for `cooplearn-core`.
//!
//! - [`io`]: CSV views and responses
//! - [`report`]: versioned JSON outputs
//! - [`parallel`]: a rayon-backed [`Executor`](cooplearn_core::exec::Executor)
//! - [`config`]: run configuration merged from JSON and flags
//! - [`commands`]: the `fit`, `cv`, `predict`, `simulate` and `theory-check` subcommands

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod parallel;
pub mod report;

pub use cooplearn_core as core;
pub use error::{CliError, ExitCode};
