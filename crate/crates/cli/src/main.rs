use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use intele_cli::commands::{cmd_eval, cmd_generate, cmd_identcheck, cmd_train, resolve_out};
use intele_cli::ExperimentConfig;
use intele_core::intele::Mode;

#[derive(Parser)]
#[command(name = "intele", version, about = "Synthetic artifact-shift experiments for two-branch texture detectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file, or a built-in preset name (generalization, identifiability)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides both the generator seed and the training seed
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        Ok(match self.seed {
            Some(s) => cfg.with_seed(s),
            None => cfg,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample train_PL.csv, test_PL.csv, test_PH.csv and meta.json
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model on <data>/train_PL.csv and write a run directory
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory produced by `generate`
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// intele, no_fsc or ce
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Score a dataset with a saved model
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Dataset CSV
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit true sufficient statistics from learned embeddings, per seed
    Identcheck {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fit on the true statistics themselves instead of a trained encoder
        #[arg(long)]
        oracle: bool,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { cfg, out } => {
            let cfg = cfg.load()?;
            let out = resolve_out(out, &cfg)?;
            let meta = cmd_generate(&cfg, &out)?;
            for (name, info) in &meta.files {
                println!("{name}: {} rows, sha256 {}", info.rows, info.sha256);
            }
        }
        Command::Train { cfg, data, out, mode } => {
            let mut cfg = cfg.load()?;
            if let Some(m) = mode {
                cfg.training.mode = m;
            }
            let out = resolve_out(out, &cfg)?;
            let rep = cmd_train(&cfg, &data, &out)?;
            println!("{} trained for {} epochs, train accuracy {:.4}", rep.mode, rep.epochs, rep.final_train_accuracy);
            for (name, ev) in &rep.evaluations {
                println!("{name}: AUC {:.4}, accuracy {:.4}", ev.metrics.auc_mann_whitney, ev.metrics.accuracy);
            }
        }
        Command::Eval { model, data, out } => {
            let rep = cmd_eval(&model, &data, &out)?;
            println!(
                "AUC {:.4} (trapezoid {:.4}), accuracy {:.4}",
                rep.metrics.auc_mann_whitney, rep.metrics.auc_trapezoid, rep.metrics.accuracy
            );
        }
        Command::Identcheck { cfg, out, oracle } => {
            let cfg = cfg.load()?;
            let out = resolve_out(out, &cfg)?;
            let agg = cmd_identcheck(&cfg, &out, oracle)?;
            println!(
                "held-out mean R2 {:.4} ± {:.4} over seeds {:?}; condition (b) satisfied: {}",
                agg.mean_r2, agg.std_r2, agg.seeds, agg.condition_b_satisfied
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
