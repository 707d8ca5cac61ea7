//! `gamerank`: synth → profile → strategize → rerank → eval → report.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 provider error.

mod commands;
mod config;
mod error;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use tracing_subscriber::EnvFilter;

use config::{Cli, Command, FileConfig, Settings};
use error::CliError;

fn run(cli: Cli) -> Result<commands::Output, CliError> {
    let file = match &cli.global.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let settings = Settings::resolve(&cli.global, &file)?;
    match &cli.command {
        Command::Synth(args) => commands::synth(&settings, args),
        Command::Profile => commands::profile(&settings),
        Command::Strategize(args) => commands::strategize(&settings, args),
        Command::Rerank(args) => commands::rerank(&settings, args, &file),
        Command::Eval(args) => commands::eval(&settings, args, &file),
        Command::Report(args) => commands::report(&settings, args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let default_level = if cli.global.verbose { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default_level)))
        .with_writer(std::io::stderr)
        .init();

    match run(cli) {
        Ok(out) => {
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{}", out.stdout.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
