//! The `cellmap` command line: synthetic capture, mapping, referencing, grid
//! building, padding, evaluation, and the HTTP edit service.

pub mod cli;
pub mod commands;
pub mod config;
pub mod server;

pub use cli::{run, Cli};
pub use config::RunConfig;

/// Exit status when referencing does not converge.
pub const EXIT_NOT_CONVERGED: i32 = 3;
