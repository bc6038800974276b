use std::process::ExitCode;

use adaptest::cli::{run, Cli, Command};
use clap::error::ErrorKind;
use clap::Parser;
use tracing_subscriber::EnvFilter;

const EXIT_RUNTIME: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_USAGE: u8 = 64;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let default_level = if matches!(cli.command, Command::Serve(_)) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default_level)))
        .init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            for v in e.violations() {
                eprintln!("  {:?}: {v}", v.rule);
            }
            match e {
                adaptest::Error::Usage(_) => ExitCode::from(EXIT_USAGE),
                ref e if e.is_validation() => ExitCode::from(EXIT_VALIDATION),
                _ => ExitCode::from(EXIT_RUNTIME),
            }
        }
    }
}
