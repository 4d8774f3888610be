//! Library half of the `ymflow` command-line tool: run configuration, simulation driver,
//! report formatting and the acceptance suites behind `ymflow verify`.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod simulate;
pub mod verify;

pub use error::{CliError, Result};

/// Environment variable read for the worker thread count.
pub const THREADS_ENV: &str = "YMFLOW_THREADS";
