//! `wdrocert`: solve (regularized) Wasserstein DRO problems, compute
//! generalization certificates, and run seeded Monte Carlo verification.
//!
//! Exit codes: 0 success, 1 usage error, 2 configuration or solver error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "wdrocert",
    about = "Wasserstein DRO dual solvers, generalization certificates and Monte Carlo checks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Path to the JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (default: WDROCERT_WORKERS or all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Suppresses the summary on standard output.
    #[arg(long, global = true, default_value_t = false)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Robust risk over the θ-grid for each configured radius.
    Risk,
    /// Entropically regularized robust risk over the θ-grid.
    RegRisk,
    /// Certificate bundle (critical radius, dual bounds, α, β, n_min).
    Certify,
    /// Monte Carlo coverage of the exact generalization bound.
    Coverage,
    /// Minimal radius reaching the target coverage, per sample size.
    Sweep,
    /// Excess-risk audit of the upper bound.
    Excess,
    /// Empirical uniform gap between population and empirical dual values.
    Gap,
    /// Degeneracy diagnostic: worst-case gap against the loss maximum.
    Degeneracy,
}

fn main() {
    let code = match Cli::try_parse() {
        Err(err) => {
            use clap::error::ErrorKind;
            match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{err}");
                    0
                }
                _ => {
                    eprint!("{err}");
                    1
                }
            }
        }
        Ok(cli) => match run(cli) {
            Ok(()) => 0,
            Err(err) => {
                eprintln!("error: {err:#}");
                2
            }
        },
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<()> {
    let workers = cli.workers.or_else(|| {
        std::env::var("WDROCERT_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(workers) = workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build_global()
            .ok();
    }

    let config_path = cli
        .config
        .ok_or_else(|| anyhow::anyhow!("--config <path> is required"))?;
    let mut experiment = config::parse_config(&config_path)?;
    if let Some(seed) = cli.seed {
        experiment.config.master_seed = seed;
    }
    let out = cli.out.as_deref();

    match cli.command {
        Command::Risk => commands::cmd_risk(&experiment, out, cli.quiet),
        Command::RegRisk => commands::cmd_reg_risk(&experiment, out, cli.quiet),
        Command::Certify => commands::cmd_certify(&experiment, out, cli.quiet),
        Command::Coverage => commands::cmd_coverage(&experiment, out, cli.quiet),
        Command::Sweep => commands::cmd_sweep(&experiment, out, cli.quiet),
        Command::Excess => commands::cmd_excess(&experiment, out, cli.quiet),
        Command::Gap => commands::cmd_gap(&experiment, out, cli.quiet),
        Command::Degeneracy => commands::cmd_degeneracy(&experiment, out, cli.quiet),
    }
}
