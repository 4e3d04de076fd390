//! High-level run orchestration shared by the CLI subcommands: training
//! runs that leave reproducible artifacts on disk, fixed-SNR evaluations,
//! SNR sweeps with CSV/plot output, and the full experiment grid.
//!
//! A run directory contains `checkpoint.bin`, `history.csv`, and
//! `config.txt`; everything needed to rebuild its test split and metrics
//! bit-identically is derivable from those plus the dataset directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use pcsc_core::channel::PowerNormState;
use pcsc_core::eval::{Evaluator, MetricsRecord};
use pcsc_core::model::Model;
use pcsc_core::training::{
    split_dataset, train_observed, LabeledSample, Task, TrainHistory,
};

use crate::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use crate::config::RunConfig;
use crate::dataset::{load_samples, mix_seed, read_manifest};
use crate::metrics::{spearman, write_history_csv, write_metrics_csv};
use crate::plot::{line_plot, Series};

/// Salt for deriving the default evaluation seed from the run seed.
const EVAL_SEED_SALT: u64 = 0x4556_414c;

pub fn default_eval_seed(run_seed: u64) -> u64 {
    mix_seed(run_seed, EVAL_SEED_SALT)
}

/// Loads the dataset with the run's preprocessing and splits it. Returns
/// (all samples, train indices, test indices).
pub fn prepare_split(
    cfg: &RunConfig,
    data_dir: &Path,
) -> Result<(Vec<LabeledSample<f32>>, Vec<usize>, Vec<usize>)> {
    let manifest = read_manifest(data_dir)?;
    let (samples, skipped) = load_samples(&manifest, &cfg.preprocess_options())?;
    if !skipped.is_empty() {
        eprintln!(
            "note: {} samples fully suppressed by background removal were skipped",
            skipped.len()
        );
    }
    if samples.is_empty() {
        bail!("dataset produced no usable samples");
    }
    let (train_idx, test_idx) = split_dataset(&samples, cfg.split_ratio, cfg.seed)?;
    Ok((samples, train_idx, test_idx))
}

/// Trains one model and writes `checkpoint.bin`, `history.csv`, and
/// `config.txt` into `out_dir`.
pub fn train_run(cfg: &RunConfig, data_dir: &Path, out_dir: &Path) -> Result<TrainHistory> {
    let (samples, train_idx, test_idx) = prepare_split(cfg, data_dir)?;
    train_run_prepared(cfg, &samples, &train_idx, &test_idx, out_dir)
}

/// [`train_run`] on an already loaded and split dataset.
pub fn train_run_prepared(
    cfg: &RunConfig,
    samples: &[LabeledSample<f32>],
    train_idx: &[usize],
    test_idx: &[usize],
    out_dir: &Path,
) -> Result<TrainHistory> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating run directory {}", out_dir.display()))?;
    println!(
        "training on {} samples ({} held out), task={:?}, D={}, lambda_cls={}",
        train_idx.len(),
        test_idx.len(),
        cfg.task,
        cfg.latent_dim,
        cfg.lambda_cls
    );
    let train_samples: Vec<LabeledSample<f32>> =
        train_idx.iter().map(|&i| samples[i].clone()).collect();
    let _ = test_idx;

    let train_cfg = cfg.train_config();
    let output = train_observed(&train_samples, &train_cfg, |e| {
        println!(
            "epoch {:>3}: loss {:.4} (rec {:.4}, cls {:.4}) acc {:.3}",
            e.epoch, e.loss_total, e.loss_rec_sum, e.loss_cls, e.train_acc
        );
    })?;

    let mut model = output.model;
    let meta = CheckpointMeta {
        task: cfg.task,
        lambda_cls: cfg.lambda_cls,
    };
    save_checkpoint(&out_dir.join("checkpoint.bin"), &mut model, &output.power_norm, &meta)?;
    write_history_csv(&out_dir.join("history.csv"), &output.history)?;
    cfg.to_file(&out_dir.join("config.txt"))?;
    Ok(output.history)
}

/// A trained run loaded back from disk.
pub struct LoadedRun {
    pub model: Model<f32>,
    pub power_norm: PowerNormState<f32>,
    pub cfg: RunConfig,
}

/// Loads `checkpoint.bin` + `config.txt` from a run directory (or accepts a
/// direct path to the checkpoint with the config next to it).
pub fn load_run(run_dir: &Path) -> Result<LoadedRun> {
    let (ckpt_path, cfg_path) = if run_dir.is_dir() {
        (run_dir.join("checkpoint.bin"), run_dir.join("config.txt"))
    } else {
        (
            run_dir.to_path_buf(),
            run_dir.with_file_name("config.txt"),
        )
    };
    let (model, power_norm, meta) = load_checkpoint(&ckpt_path)?;
    let cfg = RunConfig::from_file(&cfg_path)?;
    if cfg.task != meta.task {
        bail!(
            "{}: config task disagrees with checkpoint task",
            cfg_path.display()
        );
    }
    if cfg.latent_dim != model.latent_dim() {
        bail!("{}: config latent_dim disagrees with checkpoint", cfg_path.display());
    }
    Ok(LoadedRun {
        model,
        power_norm,
        cfg,
    })
}

/// Builds the held-out test set of a loaded run.
pub fn test_samples(run: &LoadedRun, data_dir: &Path) -> Result<Vec<LabeledSample<f32>>> {
    let (samples, _, test_idx) = prepare_split(&run.cfg, data_dir)?;
    Ok(test_idx.into_iter().map(|i| samples[i].clone()).collect())
}

/// Evaluates a run at one SNR (or with the channel bypassed).
pub fn eval_run(
    run_dir: &Path,
    data_dir: &Path,
    snr_db: f64,
    bypass: bool,
    eval_seed: Option<u64>,
) -> Result<MetricsRecord> {
    let run = load_run(run_dir)?;
    let test = test_samples(&run, data_dir)?;
    let eval_seed = eval_seed.unwrap_or_else(|| default_eval_seed(run.cfg.seed));
    let fingerprint = run.cfg.fingerprint();
    let evaluator = Evaluator::new(
        &run.model,
        &run.power_norm,
        &test,
        run.cfg.task,
        &fingerprint,
    )?;
    Ok(evaluator.evaluate(snr_db, bypass, eval_seed)?)
}

/// Sweeps a run across `snrs`, writes the metrics CSV (one row per SNR) and
/// optionally a bypass baseline CSV and SVG plots next to it.
pub fn sweep_run(
    run_dir: &Path,
    data_dir: &Path,
    snrs: &[f64],
    out_csv: &Path,
    eval_seed: Option<u64>,
    baseline_csv: Option<&Path>,
    plots: bool,
) -> Result<Vec<MetricsRecord>> {
    let run = load_run(run_dir)?;
    let test = test_samples(&run, data_dir)?;
    sweep_prepared(&run, &test, snrs, out_csv, eval_seed, baseline_csv, plots)
}

/// [`sweep_run`] on an already prepared held-out set.
pub fn sweep_prepared(
    run: &LoadedRun,
    test: &[LabeledSample<f32>],
    snrs: &[f64],
    out_csv: &Path,
    eval_seed: Option<u64>,
    baseline_csv: Option<&Path>,
    plots: bool,
) -> Result<Vec<MetricsRecord>> {
    let eval_seed = eval_seed.unwrap_or_else(|| default_eval_seed(run.cfg.seed));
    let fingerprint = run.cfg.fingerprint();
    let evaluator = Evaluator::new(
        &run.model,
        &run.power_norm,
        test,
        run.cfg.task,
        &fingerprint,
    )?;

    let mut records = Vec::with_capacity(snrs.len());
    for &snr in snrs {
        records.push(evaluator.evaluate(snr, false, eval_seed)?);
    }
    if let Some(parent) = out_csv.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    write_metrics_csv(out_csv, &records)?;

    if let Some(baseline_path) = baseline_csv {
        let baseline = evaluator.evaluate(0.0, true, eval_seed)?;
        write_metrics_csv(baseline_path, &[baseline])?;
    }

    if plots {
        let stem = out_csv.with_extension("");
        let stem = stem.to_string_lossy();
        line_plot(
            Path::new(&format!("{stem}_chamfer.svg")),
            "Reconstruction vs. SNR",
            "SNR [dB]",
            "Chamfer distance (mean form)",
            &[Series {
                name: run.cfg.fingerprint(),
                points: records.iter().map(|r| (r.snr_db, r.chamfer_mean)).collect(),
            }],
            true,
        )?;
        line_plot(
            Path::new(&format!("{stem}_accuracy.svg")),
            "Classification accuracy vs. SNR",
            "SNR [dB]",
            "Accuracy [%]",
            &[Series {
                name: run.cfg.fingerprint(),
                points: records
                    .iter()
                    .map(|r| (r.snr_db, 100.0 * r.accuracy))
                    .collect(),
            }],
            false,
        )?;
    }
    Ok(records)
}

/// One experiment of the full grid.
struct GridRun {
    name: &'static str,
    latent_dim: usize,
    task: Task,
    background_removal: bool,
    /// Trains and evaluates without the channel: the no-channel baseline
    /// matched to the first run.
    no_channel: bool,
}

pub const GRID_RUN_NAMES: [&str; 5] = [
    "d256_object_br",
    "d64_object_br",
    "d256_object_nobr",
    "d256_clamp_br",
    "d256_object_br_nochannel",
];

const GRID: [GridRun; 5] = [
    GridRun {
        name: "d256_object_br",
        latent_dim: 256,
        task: Task::Object,
        background_removal: true,
        no_channel: false,
    },
    GridRun {
        name: "d64_object_br",
        latent_dim: 64,
        task: Task::Object,
        background_removal: true,
        no_channel: false,
    },
    GridRun {
        name: "d256_object_nobr",
        latent_dim: 256,
        task: Task::Object,
        background_removal: false,
        no_channel: false,
    },
    GridRun {
        name: "d256_clamp_br",
        latent_dim: 256,
        task: Task::ClampDetection,
        background_removal: true,
        no_channel: false,
    },
    GridRun {
        name: "d256_object_br_nochannel",
        latent_dim: 256,
        task: Task::Object,
        background_removal: true,
        no_channel: true,
    },
];

pub const SWEEP_SNRS: [f64; 7] = [-4.0, -2.0, 0.0, 2.0, 4.0, 6.0, 8.0];

/// Results of the full grid, in `GRID` order.
pub struct GridOutcome {
    pub run_dirs: Vec<PathBuf>,
    pub sweeps: Vec<Vec<MetricsRecord>>,
    pub baselines: Vec<MetricsRecord>,
}

/// Generates (or reuses) a dataset, trains the experiment grid, sweeps every
/// run across the training SNR range plus the no-channel baseline, and
/// writes a human-readable summary. Byte-identical outputs for identical
/// seeds.
pub fn reproduce(
    out_dir: &Path,
    data_dir: Option<&Path>,
    per_class: usize,
    epochs: usize,
    seed: u64,
    plots: bool,
) -> Result<GridOutcome> {
    fs::create_dir_all(out_dir)?;
    let data_dir = match data_dir {
        Some(d) => d.to_path_buf(),
        None => {
            let d = out_dir.join("data");
            if !d.join("manifest.csv").exists() {
                println!("generating dataset ({per_class} scenes per class) ...");
                crate::dataset::generate_dataset(per_class, mix_seed(seed, 1), &d)?;
            }
            d
        }
    };

    let mut outcome = GridOutcome {
        run_dirs: Vec::new(),
        sweeps: Vec::new(),
        baselines: Vec::new(),
    };

    // The grid shares preprocessed data between runs with identical
    // preprocessing; only the background-removal flag differs here.
    let mut prepared: Vec<(RunConfig, (Vec<LabeledSample<f32>>, Vec<usize>, Vec<usize>))> =
        Vec::new();

    for grid in &GRID {
        let mut cfg = RunConfig::default();
        cfg.task = grid.task;
        cfg.latent_dim = grid.latent_dim;
        cfg.background_removal = grid.background_removal;
        cfg.bypass = grid.no_channel;
        cfg.epochs = epochs;
        cfg.seed = seed;

        let key = cfg.preprocess_options();
        let split = match prepared
            .iter()
            .find(|(c, _)| c.preprocess_options() == key)
        {
            Some((_, split)) => split,
            None => {
                let split = prepare_split(&cfg, &data_dir)?;
                prepared.push((cfg.clone(), split));
                &prepared.last().unwrap().1
            }
        };

        let run_dir = out_dir.join(grid.name);
        println!("=== run {} ===", grid.name);
        train_run_prepared(&cfg, &split.0, &split.1, &split.2, &run_dir)?;
        let run = load_run(&run_dir)?;
        let test: Vec<LabeledSample<f32>> =
            split.2.iter().map(|&i| split.0[i].clone()).collect();
        let records = sweep_prepared(
            &run,
            &test,
            &SWEEP_SNRS,
            &run_dir.join("metrics.csv"),
            None,
            Some(&run_dir.join("baseline.csv")),
            plots,
        )?;
        let baseline = crate::metrics::read_metrics_csv(&run_dir.join("baseline.csv"))?
            .pop()
            .expect("baseline row");
        outcome.run_dirs.push(run_dir);
        outcome.sweeps.push(records);
        outcome.baselines.push(baseline);
    }

    let summary = summarize(&outcome);
    fs::write(out_dir.join("summary.txt"), &summary)?;
    println!("{summary}");

    if plots {
        let chamfer_series: Vec<Series> = GRID
            .iter()
            .zip(&outcome.sweeps)
            .map(|(g, recs)| Series {
                name: g.name.to_string(),
                points: recs.iter().map(|r| (r.snr_db, r.chamfer_mean)).collect(),
            })
            .collect();
        line_plot(
            &out_dir.join("chamfer_vs_snr.svg"),
            "Reconstruction vs. SNR",
            "SNR [dB]",
            "Chamfer distance (mean form)",
            &chamfer_series,
            true,
        )?;
        let acc_series: Vec<Series> = GRID
            .iter()
            .zip(&outcome.sweeps)
            .map(|(g, recs)| Series {
                name: g.name.to_string(),
                points: recs
                    .iter()
                    .map(|r| (r.snr_db, 100.0 * r.accuracy))
                    .collect(),
            })
            .collect();
        line_plot(
            &out_dir.join("accuracy_vs_snr.svg"),
            "Accuracy vs. SNR",
            "SNR [dB]",
            "Accuracy [%]",
            &acc_series,
            false,
        )?;
    }
    Ok(outcome)
}

/// Renders the grid results as a fixed-width table plus trend statistics.
fn summarize(outcome: &GridOutcome) -> String {
    let mut s = String::new();
    s.push_str("run                 metric        ");
    for snr in SWEEP_SNRS {
        s.push_str(&format!("{snr:>9}"));
    }
    s.push_str("   no-chan\n");
    for ((grid, recs), baseline) in GRID.iter().zip(&outcome.sweeps).zip(&outcome.baselines) {
        s.push_str(&format!("{:<19} chamfer_mean  ", grid.name));
        for r in recs {
            s.push_str(&format!("{:>9.5}", r.chamfer_mean));
        }
        s.push_str(&format!(" {:>9.5}\n", baseline.chamfer_mean));
        s.push_str(&format!("{:<19} accuracy      ", ""));
        for r in recs {
            s.push_str(&format!("{:>9.3}", r.accuracy));
        }
        s.push_str(&format!(" {:>9.3}\n", baseline.accuracy));
    }

    s.push('\n');
    for (grid, recs) in GRID.iter().zip(&outcome.sweeps) {
        let snrs: Vec<f64> = recs.iter().map(|r| r.snr_db).collect();
        let chamfer: Vec<f64> = recs.iter().map(|r| r.chamfer_mean).collect();
        let rho = spearman(&chamfer, &snrs);
        s.push_str(&format!(
            "{}: chamfer(-4dB)/chamfer(8dB) = {:.2}, spearman(chamfer, snr) = {:.3}\n",
            grid.name,
            chamfer[0] / chamfer[chamfer.len() - 1],
            rho
        ));
    }
    let d256: f64 = outcome.sweeps[0].iter().map(|r| r.chamfer_mean).sum::<f64>() / 7.0;
    let d64: f64 = outcome.sweeps[1].iter().map(|r| r.chamfer_mean).sum::<f64>() / 7.0;
    s.push_str(&format!(
        "sweep-mean chamfer: D=256 {d256:.5} vs D=64 {d64:.5}\n"
    ));
    let obj = &outcome.sweeps[0];
    s.push_str(&format!(
        "object accuracy: 0dB {:.3} vs 8dB {:.3}; chamfer 0dB/8dB = {:.2}\n",
        obj[2].accuracy,
        obj[6].accuracy,
        obj[2].chamfer_mean / obj[6].chamfer_mean
    ));
    s.push_str(&format!(
        "object accuracy at 8dB: removal on {:.3} vs off {:.3}\n",
        outcome.sweeps[0][6].accuracy, outcome.sweeps[2][6].accuracy
    ));
    let clamp_min = outcome.sweeps[3]
        .iter()
        .zip(&outcome.sweeps[0])
        .map(|(c, o)| c.accuracy - o.accuracy)
        .fold(f64::INFINITY, f64::min);
    s.push_str(&format!(
        "min over SNR of (clamp accuracy - object accuracy) = {clamp_min:.3}\n"
    ));
    let noisy_best = outcome.sweeps[0]
        .iter()
        .map(|r| r.chamfer_mean)
        .fold(f64::INFINITY, f64::min);
    s.push_str(&format!(
        "no-channel trained baseline chamfer {:.5} vs best noisy-model chamfer {noisy_best:.5}\n",
        outcome.baselines[4].chamfer_mean
    ));
    s
}
