//! File formats and commands behind the `antrack` binary.

pub mod commands;
pub mod error;
pub mod formats;
pub mod settings;

pub use error::{CliError, Result};
