//! `soilph`: soil pH prediction from nearest-field statistics.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 runtime
//! error. Diagnostics go to stderr; stdout carries data.

mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use commands::{Cli, CliError};

fn main() -> ExitCode {
    // Worker-count override; all other behavior comes from flags/config.
    if let Ok(value) = std::env::var("SOILPH_THREADS") {
        match value.parse::<usize>() {
            Ok(n) if n >= 1 => {
                if let Err(e) = soilph::par::configure_workers(n) {
                    eprintln!("warning: {e}");
                }
            }
            _ => eprintln!("warning: ignoring SOILPH_THREADS={value:?} (want a positive integer)"),
        }
    }

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };

    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err {
                CliError::Usage(_) => 1,
                CliError::Data(_) => 2,
                CliError::Runtime(_) => 3,
            })
        }
    }
}
