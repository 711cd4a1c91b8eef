//! `dpdo`: config-driven experiments for digital boundary value problems.

mod config;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Mode;

const EXIT_GATE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "dpdo", version, about = "Digital pseudo-differential boundary problems in a quadrant")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// Check a config without computing anything.
    Validate { config: PathBuf },
    /// Print the CSV columns of a mode.
    Schema { mode: String },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Schema { mode } => match Mode::parse(&mode) {
            Some(m) => {
                print!("{}", report::schema(m));
                ExitCode::SUCCESS
            }
            None => {
                let names: Vec<&str> = Mode::ALL.iter().map(|m| m.name()).collect();
                eprintln!("error: unknown mode `{mode}` (expected one of {})", names.join(", "));
                ExitCode::from(EXIT_CONFIG)
            }
        },
        Command::Validate { config } => match config::load(&config) {
            Ok(cfg) => {
                println!("{}: ok (mode {}, output {})", config.display(), cfg.mode.name(), cfg.output.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
        Command::Run { config } => run_config(&config),
    }
}

fn run_config(path: &PathBuf) -> ExitCode {
    let cfg = match config::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let report = match run::run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {} run failed in the numerical core: {e}", cfg.mode.name());
            return ExitCode::from(EXIT_NUMERIC);
        }
    };
    let echo = std::fs::read_to_string(&cfg.source).unwrap_or_default();
    let summary = match report.write(&cfg.output, &echo) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: cannot write {}: {e}", cfg.output.display());
            return ExitCode::from(EXIT_IO);
        }
    };
    for g in &report.gates {
        println!("criterion {} ({}): {}: {}", g.criterion, g.name, if g.pass { "PASS" } else { "FAIL" }, g.detail);
    }
    println!("wrote {} and {}", cfg.output.display(), summary.display());
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_GATE)
    }
}
