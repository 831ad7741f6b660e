//! `assign`: generate, solve, round and evaluate constrained assignment problems.

mod args;
mod commands;
mod error;
mod files;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::CliError;

fn run(cli: &Cli) -> Result<Vec<serde_json::Value>, CliError> {
    Ok(match &cli.command {
        Command::Gen(a) => vec![commands::gen(a)?],
        Command::Solve(a) => vec![commands::solve_cmd(a)?],
        Command::Round(a) => vec![commands::round(a)?],
        Command::Eval(a) => vec![commands::eval(a)?],
        Command::Oracle(a) => vec![commands::oracle(a)?],
        Command::Bench(b) => commands::bench(b)?,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ASSIGN_LOG", "info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(1)
        }
    }
}
