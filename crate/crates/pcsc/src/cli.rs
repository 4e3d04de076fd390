//! Command-line interface: dataset generation, training, evaluation,
//! SNR sweeps, and the full experiment grid.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use pcsc_core::geometry::ResampleStrategy;
use pcsc_core::training::Task;

use crate::config::{parse_snr_list, RunConfig};
use crate::dataset::generate_dataset;
use crate::metrics::write_metrics_csv;
use crate::runner;

/// Task-oriented wireless point-cloud transmission simulator.
#[derive(Parser)]
#[command(name = "pcsc", version, about)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Resolves the global seed: explicit flag, then the PCSC_SEED environment
/// variable, then 0.
fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("PCSC_SEED") {
        Ok(v) => v
            .parse()
            .with_context(|| format!("PCSC_SEED='{v}' is not an integer")),
        Err(_) => Ok(0),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (PLY scenes + reference scan + manifest).
    Gen {
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Scenes per object class; half of them include a clamp.
        #[arg(long, default_value_t = 60)]
        per_class: usize,
        /// Master seed (falls back to PCSC_SEED, then 0).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model and write a run directory.
    Train(TrainArgs),
    /// Evaluate a trained run at one SNR.
    Eval {
        /// Run directory (or checkpoint path).
        #[arg(long)]
        model: PathBuf,
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Channel SNR in dB.
        #[arg(long, allow_hyphen_values = true, default_value_t = 8.0)]
        snr: f64,
        /// Skip the channel entirely (no-channel baseline).
        #[arg(long)]
        bypass: bool,
        /// Evaluation noise seed (defaults to a value derived from the run seed).
        #[arg(long)]
        eval_seed: Option<u64>,
        /// Optional CSV to append the record to.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep a trained run across a range of SNRs and write a metrics CSV.
    Sweep {
        /// Run directory (or checkpoint path).
        #[arg(long)]
        model: PathBuf,
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// SNR list: `start:end:step` or comma-separated values (dB).
        #[arg(long, allow_hyphen_values = true, default_value = "-4:8:2")]
        snr: String,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Also evaluate the no-channel baseline into this CSV.
        #[arg(long)]
        baseline_out: Option<PathBuf>,
        /// Evaluation noise seed (defaults to a value derived from the run seed).
        #[arg(long)]
        eval_seed: Option<u64>,
        /// Emit SVG plots next to the CSV.
        #[arg(long)]
        plot: bool,
    },
    /// Run the full experiment grid: dataset, the training runs, sweeps,
    /// baselines, and a summary table.
    Reproduce {
        /// Output directory for data, runs, and the summary.
        #[arg(long)]
        out: PathBuf,
        /// Reuse an existing dataset directory instead of generating one.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Scenes per class when generating.
        #[arg(long, default_value_t = 60)]
        per_class: usize,
        /// Training epochs per run. The default is a reduced schedule that
        /// keeps the grid within a CPU-only time budget; raise it for
        /// full-length runs.
        #[arg(long, default_value_t = 12)]
        epochs: usize,
        /// Master seed (falls back to PCSC_SEED, then 0).
        #[arg(long)]
        seed: Option<u64>,
        /// Emit SVG plots.
        #[arg(long)]
        plot: bool,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Output run directory.
    #[arg(long)]
    out: PathBuf,
    /// Configuration file (`key = value`); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Latent dimension D.
    #[arg(long)]
    latent_dim: Option<usize>,
    /// Weight of the classification loss term.
    #[arg(long)]
    lambda_cls: Option<f64>,
    /// Classification task: object | clamp.
    #[arg(long)]
    task: Option<String>,
    /// Resampling strategy: random | voxel.
    #[arg(long)]
    sampling: Option<String>,
    /// Background removal: on | off.
    #[arg(long)]
    background_removal: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    split_ratio: Option<f64>,
    /// Master seed (falls back to PCSC_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
}

impl TrainArgs {
    fn to_run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.latent_dim {
            cfg.latent_dim = v;
        }
        if let Some(v) = self.lambda_cls {
            cfg.lambda_cls = v;
        }
        if let Some(v) = &self.task {
            cfg.task = match v.as_str() {
                "object" => Task::Object,
                "clamp" => Task::ClampDetection,
                other => anyhow::bail!("unknown task '{other}' (object|clamp)"),
            };
        }
        if let Some(v) = &self.sampling {
            cfg.sampling = match v.as_str() {
                "random" => ResampleStrategy::Random,
                "voxel" => ResampleStrategy::Voxel,
                other => anyhow::bail!("unknown sampling '{other}' (random|voxel)"),
            };
        }
        if let Some(v) = &self.background_removal {
            cfg.set("background_removal", v)?;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.split_ratio {
            cfg.split_ratio = v;
        }
        cfg.seed = resolve_seed(self.seed)?;
        Ok(cfg)
    }
}

/// Runs the parsed command; errors map to exit code 2 in `main`.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            out,
            per_class,
            seed,
        } => {
            let seed = resolve_seed(seed)?;
            let manifest = generate_dataset(per_class, seed, &out)?;
            println!(
                "wrote {} clouds + reference scan + manifest to {}",
                manifest.rows.len(),
                out.display()
            );
        }
        Command::Train(args) => {
            let cfg = args.to_run_config()?;
            train_run_checked(&cfg, &args.data, &args.out)?;
            println!("run artifacts in {}", args.out.display());
        }
        Command::Eval {
            model,
            data,
            snr,
            bypass,
            eval_seed,
            out,
        } => {
            let record = runner::eval_run(&model, &data, snr, bypass, eval_seed)?;
            println!(
                "snr_db={} chamfer_mean={:.6} chamfer_sum={:.4} accuracy={:.4} n={}",
                record.snr_db,
                record.chamfer_mean,
                record.chamfer_sum,
                record.accuracy,
                record.n_samples
            );
            if let Some(path) = out {
                write_metrics_csv(&path, &[record])?;
            }
        }
        Command::Sweep {
            model,
            data,
            snr,
            out,
            baseline_out,
            eval_seed,
            plot,
        } => {
            let snrs = parse_snr_list(&snr)?;
            let records = runner::sweep_run(
                &model,
                &data,
                &snrs,
                &out,
                eval_seed,
                baseline_out.as_deref(),
                plot,
            )?;
            println!("wrote {} records to {}", records.len(), out.display());
        }
        Command::Reproduce {
            out,
            data,
            per_class,
            epochs,
            seed,
            plot,
        } => {
            let seed = resolve_seed(seed)?;
            runner::reproduce(&out, data.as_deref(), per_class, epochs, seed, plot)?;
            println!("summary written to {}", out.join("summary.txt").display());
        }
    }
    Ok(())
}

fn train_run_checked(cfg: &RunConfig, data: &std::path::Path, out: &std::path::Path) -> Result<()> {
    // Surface config problems before the (long) data loading phase.
    cfg.train_config()
        .validate()
        .map_err(|e| anyhow::anyhow!("invalid configuration: {e}"))?;
    runner::train_run(cfg, data, out)?;
    Ok(())
}
