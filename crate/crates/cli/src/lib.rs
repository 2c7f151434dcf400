//! Command implementations for the `softreg` binary.
//!
//! Exit codes: 0 success, 1 failed check, 2 usage or input error,
//! 3 training stopped on a non-finite loss or gradient.

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

pub mod args;
mod commands;
mod data;
pub mod report;

pub use args::Cli;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NONFINITE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] softreg::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_USAGE;
            }
            // help and version
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    match commands::dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}
