//! Run configuration: one flat struct covering training, channel, and
//! preprocessing choices, serialized as a plain `key = value` file so runs
//! are self-describing and replayable.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use pcsc_core::channel::ChannelConfig;
use pcsc_core::geometry::ResampleStrategy;
use pcsc_core::model::ModelConfig;
use pcsc_core::training::{Task, TrainConfig};

use crate::dataset::{PreprocessOptions, DEFAULT_TAU};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub latent_dim: usize,
    pub lambda_cls: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub split_ratio: f64,
    pub seed: u64,
    pub sampling: ResampleStrategy,
    pub background_removal: bool,
    pub tau: f64,
    pub n_points: usize,
    pub voxel_cell_rel: f64,
    pub training_snr_set_db: Vec<f64>,
    pub eval_snr_db: f64,
    pub bypass: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::Object,
            latent_dim: 256,
            lambda_cls: 1.0,
            learning_rate: 7e-4,
            batch_size: 16,
            epochs: 50,
            split_ratio: 0.7,
            seed: 0,
            sampling: ResampleStrategy::Random,
            background_removal: true,
            tau: DEFAULT_TAU,
            n_points: 2048,
            voxel_cell_rel: 0.02,
            training_snr_set_db: vec![-4.0, -2.0, 0.0, 2.0, 4.0, 6.0, 8.0],
            eval_snr_db: 8.0,
            bypass: false,
        }
    }
}

impl RunConfig {
    pub fn n_classes(&self) -> usize {
        match self.task {
            Task::Object => 6,
            Task::ClampDetection => 2,
        }
    }

    pub fn channel(&self) -> ChannelConfig {
        ChannelConfig {
            training_snr_set_db: self.training_snr_set_db.clone(),
            eval_snr_db: self.eval_snr_db,
            bypass: self.bypass,
        }
    }

    pub fn preprocess_options(&self) -> PreprocessOptions {
        PreprocessOptions {
            background_removal: self.background_removal,
            tau: self.tau,
            n_points: self.n_points,
            strategy: self.sampling,
            voxel_cell_rel: self.voxel_cell_rel,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut model = ModelConfig::standard(self.latent_dim, self.n_classes());
        model.encoder.n_points = self.n_points;
        // The geometric decoder always emits n_points * 3 values; that is
        // derived inside ModelConfig::standard from encoder.n_points.
        TrainConfig {
            model,
            task: self.task,
            lambda_cls: self.lambda_cls,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            split_ratio: self.split_ratio,
            seed: self.seed,
            channel: self.channel(),
        }
    }

    /// Compact run descriptor carried into metrics CSVs. Semicolon-separated
    /// so it stays a single CSV field.
    pub fn fingerprint(&self) -> String {
        format!(
            "D={};lambda={};sampling={};br={};task={};seed={}",
            self.latent_dim,
            self.lambda_cls,
            match self.sampling {
                ResampleStrategy::Random => "random",
                ResampleStrategy::Voxel => "voxel",
            },
            if self.background_removal { "on" } else { "off" },
            match self.task {
                Task::Object => "object",
                Task::ClampDetection => "clamp",
            },
            self.seed,
        )
    }

    pub fn to_file(&self, path: &Path) -> Result<()> {
        let snrs: Vec<String> = self.training_snr_set_db.iter().map(f64::to_string).collect();
        let text = format!(
            "task = {}\nlatent_dim = {}\nlambda_cls = {}\nlearning_rate = {}\n\
             batch_size = {}\nepochs = {}\nsplit_ratio = {}\nseed = {}\n\
             sampling = {}\nbackground_removal = {}\ntau = {}\nn_points = {}\n\
             voxel_cell_rel = {}\ntraining_snr_set_db = {}\neval_snr_db = {}\nbypass = {}\n",
            match self.task {
                Task::Object => "object",
                Task::ClampDetection => "clamp",
            },
            self.latent_dim,
            self.lambda_cls,
            self.learning_rate,
            self.batch_size,
            self.epochs,
            self.split_ratio,
            self.seed,
            match self.sampling {
                ResampleStrategy::Random => "random",
                ResampleStrategy::Voxel => "voxel",
            },
            if self.background_removal { "on" } else { "off" },
            self.tau,
            self.n_points,
            self.voxel_cell_rel,
            snrs.join(","),
            self.eval_snr_db,
            if self.bypass { "on" } else { "off" },
        );
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow::anyhow!("{}:{}: expected key = value", path.display(), i + 1))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.set(key, value)
                .with_context(|| format!("{}:{}", path.display(), i + 1))?;
        }
        Ok(cfg)
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn flag(value: &str) -> Result<bool> {
            match value {
                "on" | "true" | "1" | "yes" => Ok(true),
                "off" | "false" | "0" | "no" => Ok(false),
                other => bail!("expected on/off, got '{other}'"),
            }
        }
        match key {
            "task" => {
                self.task = match value {
                    "object" => Task::Object,
                    "clamp" => Task::ClampDetection,
                    other => bail!("unknown task '{other}' (object|clamp)"),
                }
            }
            "latent_dim" => self.latent_dim = value.parse().context("latent_dim")?,
            "lambda_cls" => self.lambda_cls = value.parse().context("lambda_cls")?,
            "learning_rate" => self.learning_rate = value.parse().context("learning_rate")?,
            "batch_size" => self.batch_size = value.parse().context("batch_size")?,
            "epochs" => self.epochs = value.parse().context("epochs")?,
            "split_ratio" => self.split_ratio = value.parse().context("split_ratio")?,
            "seed" => self.seed = value.parse().context("seed")?,
            "sampling" => {
                self.sampling = match value {
                    "random" => ResampleStrategy::Random,
                    "voxel" => ResampleStrategy::Voxel,
                    other => bail!("unknown sampling '{other}' (random|voxel)"),
                }
            }
            "background_removal" => self.background_removal = flag(value)?,
            "tau" => self.tau = value.parse().context("tau")?,
            "n_points" => self.n_points = value.parse().context("n_points")?,
            "voxel_cell_rel" => self.voxel_cell_rel = value.parse().context("voxel_cell_rel")?,
            "training_snr_set_db" => {
                self.training_snr_set_db = value
                    .split(',')
                    .map(|s| s.trim().parse::<f64>().context("training_snr_set_db"))
                    .collect::<Result<_>>()?;
            }
            "eval_snr_db" => self.eval_snr_db = value.parse().context("eval_snr_db")?,
            "bypass" => self.bypass = flag(value)?,
            other => bail!("unknown configuration key '{other}'"),
        }
        Ok(())
    }
}

/// Parses an SNR list: either `start:end:step` or a comma-separated list.
pub fn parse_snr_list(text: &str) -> Result<Vec<f64>> {
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            bail!("expected start:end:step, got '{text}'");
        }
        let start: f64 = parts[0].parse().context("snr start")?;
        let end: f64 = parts[1].parse().context("snr end")?;
        let step: f64 = parts[2].parse().context("snr step")?;
        if step <= 0.0 || end < start {
            bail!("need step > 0 and end >= start in '{text}'");
        }
        let mut out = Vec::new();
        let mut v = start;
        while v <= end + 1e-9 {
            out.push(v);
            v += step;
        }
        Ok(out)
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad SNR '{s}'")))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        let mut cfg = RunConfig::default();
        cfg.task = Task::ClampDetection;
        cfg.latent_dim = 64;
        cfg.sampling = ResampleStrategy::Voxel;
        cfg.background_removal = false;
        cfg.training_snr_set_db = vec![0.0, 4.0];
        cfg.to_file(&path).unwrap();
        let back = RunConfig::from_file(&path).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        fs::write(&path, "latent_dmi = 64\n").unwrap();
        assert!(RunConfig::from_file(&path).is_err());
    }

    #[test]
    fn snr_list_parsing() {
        assert_eq!(
            parse_snr_list("-4:8:2").unwrap(),
            vec![-4.0, -2.0, 0.0, 2.0, 4.0, 6.0, 8.0]
        );
        assert_eq!(parse_snr_list("0,4, 8").unwrap(), vec![0.0, 4.0, 8.0]);
        assert!(parse_snr_list("4:0:2").is_err());
    }

    #[test]
    fn fingerprint_has_no_commas() {
        let cfg = RunConfig::default();
        assert!(!cfg.fingerprint().contains(','));
    }
}
