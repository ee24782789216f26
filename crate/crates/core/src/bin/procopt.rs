use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use procopt::config::RunConfig;
use procopt::pipeline;

#[derive(Parser)]
#[command(
    name = "procopt",
    version,
    about = "Surrogate-assisted multi-criteria process optimization"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "procopt.toml")]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Restrict optimize/compare/report to one named scenario.
    #[arg(long, global = true)]
    scenario: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic experience dataset.
    Synth,
    /// Train one random-forest surrogate per criterion.
    Train,
    /// Derive criteria weights from the pairwise-comparison matrix.
    Ahp,
    /// Run the DQN optimizer for each target scenario.
    Optimize,
    /// Compare DQN against tabular Q-learning.
    Compare,
    /// Turn optimize run logs into plot-ready long-format curves.
    Report,
}

fn run(cli: Cli) -> procopt::Result<()> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    if let Some(name) = &cli.scenario {
        cfg.select_scenario(name)?;
    }
    let mut stdout = io::stdout().lock();
    match cli.command {
        Command::Synth => pipeline::cmd_synth(&cfg, &mut stdout).map(drop),
        Command::Train => pipeline::cmd_train(&cfg, &mut stdout).map(drop),
        Command::Ahp => pipeline::cmd_ahp(&cfg, &mut stdout).map(drop),
        Command::Optimize => pipeline::cmd_optimize(&cfg, &mut stdout).map(drop),
        Command::Compare => pipeline::cmd_compare(&cfg, &mut stdout).map(drop),
        Command::Report => pipeline::cmd_report(&cfg, &mut stdout).map(drop),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("procopt: {e}");
            ExitCode::FAILURE
        }
    }
}
