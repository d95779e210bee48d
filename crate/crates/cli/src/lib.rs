//! Driver for the `strip-vortex` command line tool.

pub mod checks;
pub mod commands;
pub mod diagnostics;
