mod args;
mod bench;
mod commands;
mod error;
mod report;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::{CliError, EXIT_OK};

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DECPROG_LOG", "error"))
        .format_timestamp(None)
        .init();
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Validate { model } => commands::validate_cmd(model),
        Command::Solve(a) => commands::solve(a).map(drop),
        Command::Evaluate(a) => commands::evaluate(a).map(drop),
        Command::Frontier(a) => commands::frontier(a).map(drop),
        Command::Bench(a) => bench::run(a).map(drop),
        Command::Generate(a) => commands::generate(a).map(drop),
        Command::Paths(a) => commands::paths(a).map(drop),
    }
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            if let CliError::Invalid(report) = &e {
                for f in &report.errors {
                    eprintln!("error: {f}");
                }
            } else {
                eprintln!("error: {e}");
            }
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
