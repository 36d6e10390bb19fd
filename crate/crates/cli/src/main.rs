mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{ArgAction, Parser, Subcommand};

use crate::config::{Format, RunConfig};

/// Key-rate calculator for binary-modulated heterodyne CV-QKD.
#[derive(Debug, Parser)]
#[command(name = "hetkey", version, about)]
struct Cli {
    /// TOML or JSON run configuration.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set protocol.mu=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output file (stdout when omitted).
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[arg(short, long, value_enum, global = true)]
    format: Option<Format>,
    /// Repeat for more log output on stderr.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    /// Worker threads.
    #[arg(long, env = "HETKEY_WORKERS", global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the key rate at one fully specified parameter point.
    Rate,
    /// Optimize the parameters over an attenuation grid.
    Sweep,
    /// Optimize the parameters at one channel point.
    Optimize,
    /// Monte Carlo run of the protocol and its finite-size key.
    Simulate,
    /// Run the numerical self-check suite.
    Verify,
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.set)?;
    let default_format = match cli.command {
        Command::Sweep => Format::Csv,
        _ => Format::Json,
    };
    let format = cli.format.or(cfg.output.format).unwrap_or(default_format);
    let path = cli.output.clone().or_else(|| cfg.output.path.clone());
    let (out, passed) = match cli.command {
        Command::Rate => (commands::cmd_rate(&cfg)?, true),
        Command::Sweep => (commands::cmd_sweep(&cfg)?, true),
        Command::Optimize => (commands::cmd_optimize(&cfg)?, true),
        Command::Simulate => (commands::cmd_simulate(&cfg)?, true),
        Command::Verify => commands::cmd_verify(&cfg)?,
    };
    out.emit(format, path.as_deref())?;
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
