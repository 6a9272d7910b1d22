//! Command-line pipeline over hex frames: conversion, exposure metrics,
//! clustering, zone linkage, the dataset catalog and SVG thematic maps.

pub mod commands;
pub mod config;
pub mod thematic;

use std::ffi::OsString;
use std::fmt;

use clap::Parser;

pub use commands::Cli;

/// Bad invocation: unknown flag, missing option, malformed config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Diagnostics go to standard error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            if let Some(u) = e.downcast_ref::<UsageError>() {
                eprintln!("error: {u}");
                eprintln!("run with --help for usage");
                EXIT_USAGE
            } else {
                eprintln!("error: {e}");
                EXIT_DATA
            }
        }
    }
}
