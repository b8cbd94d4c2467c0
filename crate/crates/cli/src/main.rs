use std::process::ExitCode;

use clap::Parser;
use medsel_cli::args::Cli;

fn main() -> ExitCode {
    match medsel_cli::run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
