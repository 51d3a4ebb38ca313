mod commands;

use std::process::ExitCode;

use clap::Parser;

use commands::{Cli, CliError};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

impl CliError {
    /// 2 validation, 3 data, 4 runtime.
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Core(percept_core::Error::Config(_)) => 2,
            CliError::Core(e) if e.is_data_error() => 3,
            CliError::Violations(_) => 3,
            CliError::Core(_) => 4,
        }
    }
}
