use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use fedpon_cli::config::ExperimentConfig;
use fedpon_cli::{plot, report, runner};
use fedpon_core::analysis::norm_imbalance_experiment;
use fedpon_core::fed::Strategy;

#[derive(Parser)]
#[command(name = "fedpon", about = "Federated PPO with personalized observation normalization")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the configured sweep and write metrics.
    Run {
        /// Path to a JSON experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Restrict to one strategy (or "all").
        #[arg(long)]
        strategy: Option<String>,
        /// Restrict to one seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Summarize a finished sweep and write summary.json.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Render SVG charts for a finished sweep.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Print observation-distribution and weight diagnostics.
    Diagnose {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Run the two-agent norm-imbalance probe.
    NormImbalance {
        /// Input-scale ratio between the two agents.
        #[arg(long)]
        ratio: f64,
        #[arg(long, default_value_t = 30)]
        rounds: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run {
            config,
            strategy,
            seed,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let strategies: Vec<Strategy> = match strategy.as_deref() {
                None | Some("all") => cfg.strategies.clone(),
                Some(name) => vec![name.parse().context("parsing --strategy")?],
            };
            let seeds: Vec<u64> = match seed {
                None => cfg.seeds.clone(),
                Some(s) => vec![s],
            };
            let dirs = runner::run_experiment(&cfg, &strategies, &seeds, &out)?;
            for d in dirs {
                println!("wrote {}", d.display());
            }
        }
        Cmd::Report { input } => {
            let summary = report::summarize(&input)?;
            print!("{}", report::render_summary(&summary));
            println!("wrote {}", input.join("summary.json").display());
        }
        Cmd::Plot { input } => {
            for p in plot::plot_all(&input)? {
                println!("wrote {}", p.display());
            }
        }
        Cmd::Diagnose { input } => {
            let cells = report::diagnose(&input)?;
            print!("{}", report::render_diagnosis(&cells));
        }
        Cmd::NormImbalance {
            ratio,
            rounds,
            seed,
        } => {
            let r = norm_imbalance_experiment(ratio, rounds, seed)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
    }
    Ok(())
}
