//! `gmcf`: translating profiles, speed selection, evolution runs and the
//! acceptance suite from the command line.

mod commands;
mod failure;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use failure::Failure;
use settings::Settings;

#[derive(Parser, Debug)]
#[command(
    name = "gmcf",
    version,
    about = "Radial translating solutions of V = H^alpha + b"
)]
struct Cli {
    /// TOML file with the same keys as the flags (dashes as underscores)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one profile for given (N, alpha, b, c)
    Profile(Box<Settings>),
    /// Select the speed matching the boundary slope k
    Speed(Box<Settings>),
    /// Evolve radial initial data in the unit ball
    Evolve(Box<Settings>),
    /// Run the acceptance criteria
    Verify(Box<Settings>),
    /// Solve on a grid of (b, k) or (c, b) and write a long-format CSV
    Sweep(Box<Settings>),
}

fn run(cli: Cli) -> Result<i32, Failure> {
    let file = cli.config.as_deref();
    match cli.command {
        Command::Profile(f) => commands::profile(&Settings::resolve(file, &f)?),
        Command::Speed(f) => commands::speed(&Settings::resolve(file, &f)?),
        Command::Evolve(f) => commands::evolve_cmd(&Settings::resolve(file, &f)?),
        Command::Verify(f) => commands::verify_cmd(&Settings::resolve(file, &f)?),
        Command::Sweep(f) => commands::sweep(&Settings::resolve(file, &f)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let text = e.to_string();
                let first = text.lines().next().unwrap_or("");
                let f = Failure::usage(first.trim_start_matches("error: "));
                eprintln!("{}", f.line());
                return ExitCode::from(2);
            }
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::from(f.code as u8)
        }
    }
}
