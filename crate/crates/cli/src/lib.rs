//! Command-line front end for `ladder-kv`: configuration loading and the
//! CSV/SVG emitters behind the `simulate`, `render`, `sweep` and `compare`
//! verbs.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::main_with_args;
pub use error::CliError;
