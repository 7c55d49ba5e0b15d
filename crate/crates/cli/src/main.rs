use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    ExitCode::from(regcomplex_cli::main_with(regcomplex_cli::Args::parse()))
}
