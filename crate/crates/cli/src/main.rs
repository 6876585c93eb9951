//! Command-line front end for the crossing-model pipeline.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use pedcross_core::commands::{cmd_fit, cmd_report, cmd_simulate, cmd_train};
use pedcross_core::config::load_config;

#[derive(Parser)]
#[command(name = "pedcross", version, about = "Pedestrian crossing decision model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Plain-text key=value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy network and write weights plus the reward curve.
    Train(CommonArgs),
    /// Roll out a trained policy over the scenario/parameter grid.
    Simulate(CommonArgs),
    /// Fit (sigma_v, c) per participant and pooled from trial data.
    Fit(CommonArgs),
    /// Consolidate outputs into plot-ready CDF and acceptance tables.
    Report(CommonArgs),
}

fn load(common: &CommonArgs) -> anyhow::Result<pedcross_core::ExperimentConfig> {
    let mut cfg = load_config(&common.config)
        .with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        cfg.override_seed(seed);
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Train(common) => {
            let cfg = load(common)?;
            let artifacts = cmd_train(&cfg)?;
            println!(
                "trained {} ({} episodes, {} updates): final mean reward {:.3}",
                cfg.variant.as_str(),
                cfg.train.episodes,
                artifacts.learn_steps,
                artifacts.final_mean_reward
            );
            println!("weights: {}", artifacts.weights_path.display());
            println!("reward log: {}", artifacts.reward_log_path.display());
        }
        Command::Simulate(common) => {
            let cfg = load(common)?;
            let artifacts = cmd_simulate(&cfg)?;
            println!(
                "simulated {} cells x {} reps",
                artifacts.metrics.outcome_counts.len(),
                cfg.n_reps
            );
            println!("cit samples: {}", artifacts.cit_samples_path.display());
            println!("metrics: {}", artifacts.metrics_path.display());
            if let Some(path) = &artifacts.synthetic_trials_path {
                println!("synthetic trials: {}", path.display());
            }
        }
        Command::Fit(common) => {
            let cfg = load(common)?;
            let artifacts = cmd_fit(&cfg)?;
            let s = &artifacts.summary;
            println!(
                "per-participant: log-lik {:.2}, k {}, AIC {:.2}",
                s.per_participant.log_lik, s.per_participant.k, s.per_participant.aic
            );
            println!(
                "pooled: log-lik {:.2}, k {}, AIC {:.2}",
                s.pooled.log_lik, s.pooled.k, s.pooled.aic
            );
            println!("fits: {}", artifacts.fits_path.display());
            println!("aic: {}", artifacts.aic_path.display());
        }
        Command::Report(common) => {
            let cfg = load(common)?;
            let artifacts = cmd_report(&cfg)?;
            println!(
                "report over {} cells ({} CDF points, {} warnings)",
                artifacts.summary.n_cells,
                artifacts.summary.n_cdf_points,
                artifacts.summary.warnings.len()
            );
            println!("report: {}", artifacts.report_path.display());
        }
    }
    Ok(())
}
