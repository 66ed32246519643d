//! `landau`: assemble operators, run simulations, run the verification
//! battery and compare against the quadrature oracle.
//!
//! Exit status: 0 when every requested check passes, 2 when checks ran and
//! failed, 3 for configuration errors, 4 for numerical aborts, 1 otherwise.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use crate::commands::CliError;
use crate::config::RunConfig;
use crate::output::{OutputDir, Verdict};

#[derive(Parser)]
#[command(name = "landau", version, about = "Hermite spectral solver for the homogeneous Landau equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write ℋ, Δ_S and ℒ_L and report the spectrum of ℒ_L.
    Assemble(Args),
    /// Integrate the fluctuation equation and certify the weighted-norm bound.
    Simulate(Args),
    /// Run the invariant battery (two-dimensional defaults without --config).
    Verify(Args),
    /// Compare the spectral right-hand side with direct quadrature.
    Oracle(Args),
}

#[derive(clap::Args)]
struct Args {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for random initial data; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Only warnings and errors.
    #[arg(long)]
    quiet: bool,
}

const DEFAULT_OUT: &str = "landau_out";

fn load(args: &Args, command: &str) -> Result<RunConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None if command == "verify" => RunConfig::from_toml("dimension = 2\ntruncation = 16\n")?,
        None => {
            return Err(CliError::Config(config::ConfigError::Invalid {
                field: "--config".into(),
                message: format!("`{command}` needs a configuration file"),
            }))
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
        config.validate()?;
    }
    Ok(config)
}

fn run(command: &str, args: &Args) -> Result<Verdict, CliError> {
    let config = load(args, command)?;
    let root = args
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let mut out = OutputDir::create(&root)?;
    let outcome = match command {
        "assemble" => commands::assemble(&config, &mut out)?,
        "simulate" => commands::simulate(&config, &mut out)?,
        "verify" => commands::verify(&config, &mut out)?,
        _ => commands::oracle(&config, &mut out)?,
    };
    if !args.quiet {
        for line in &outcome.lines {
            println!("{line}");
        }
        println!("verdict: {} (outputs in {})", verdict_name(outcome.verdict), display(&root));
    }
    Ok(outcome.verdict)
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::NotApplicable => "not-applicable",
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Assemble(a) => ("assemble", a),
        Command::Simulate(a) => ("simulate", a),
        Command::Verify(a) => ("verify", a),
        Command::Oracle(a) => ("oracle", a),
    };
    let level = if args.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(name, args) {
        Ok(Verdict::Fail) => ExitCode::from(2),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
