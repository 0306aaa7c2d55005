//! Library side of the `mre` command-line tool: configuration, the
//! subcommands, sweeps and raster output.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod render;
pub mod sweep;

pub use commands::Context;
pub use config::RunConfig;
pub use error::{CliError, Result};
