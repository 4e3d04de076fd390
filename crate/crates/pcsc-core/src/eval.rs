//! Fixed-SNR evaluation of trained models: per-sample encode, eval-mode
//! power normalization, channel noise (or bypass), both receiver branches,
//! aggregated Chamfer distance and top-1 accuracy.
//!
//! Latents are encoded once per evaluator and reused across sweep points.
//! Noise standard draws are a function of `(eval_seed, sample index)` only,
//! so every SNR point of a sweep sees the same realization scaled by its
//! sigma; curves differ by noise power, not by resampling jitter.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{noise_sigma, power_normalize_eval, standard_normal_vec, PowerNormState};
use crate::geometry::{chamfer_with_matches, ChamferForm};
use crate::mat::Mat;
use crate::model::{reshape_points, GroupingPlan, Model};
use crate::scalar::Scalar;
use crate::training::{LabeledSample, Task};
use crate::{Error, Result};

/// Encode/decode batch granularity; purely a throughput knob.
const EVAL_CHUNK: usize = 16;

/// Aggregated metrics of one evaluation run at one channel condition.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    /// Nominal SNR in dB; infinity for the bypass ("no channel") condition.
    pub snr_db: f64,
    pub chamfer_mean: f64,
    pub chamfer_sum: f64,
    pub accuracy: f64,
    pub n_samples: usize,
    /// Run-configuration fingerprint carried into the CSV output.
    pub fingerprint: String,
}

/// Reusable evaluation state for one (model, test set) pair.
pub struct Evaluator<'a, F> {
    model: &'a Model<F>,
    samples: &'a [LabeledSample<F>],
    task: Task,
    fingerprint: String,
    /// Power-normalized latents, one row per test sample.
    z_norm: Mat<F>,
}

impl<'a, F: Scalar> Evaluator<'a, F> {
    /// Encodes the whole test set once (eval mode, running statistics).
    pub fn new(
        model: &'a Model<F>,
        power_norm: &PowerNormState<F>,
        samples: &'a [LabeledSample<F>],
        task: Task,
        fingerprint: &str,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyTestSet);
        }
        for s in samples {
            let label = task.label_of(s);
            if label >= model.cfg.n_classes {
                return Err(Error::LabelOutOfRange {
                    label,
                    classes: model.cfg.n_classes,
                });
            }
        }
        let d = model.latent_dim();
        let mut z_norm = Mat::zeros(samples.len(), d);
        let mut base = 0;
        for chunk in samples.chunks(EVAL_CHUNK) {
            let plans: Vec<GroupingPlan<F>> = chunk
                .iter()
                .map(|s| GroupingPlan::build(s.cloud.points(), &model.cfg.encoder))
                .collect::<Result<_>>()?;
            let plan_refs: Vec<&GroupingPlan<F>> = plans.iter().collect();
            let z = model.encode_eval(&plan_refs)?;
            let zn = power_normalize_eval(&z, power_norm);
            for r in 0..chunk.len() {
                z_norm.row_mut(base + r).copy_from_slice(zn.row(r));
            }
            base += chunk.len();
        }
        Ok(Evaluator {
            model,
            samples,
            task,
            fingerprint: String::from(fingerprint),
            z_norm,
        })
    }

    /// Mean transmitted power per latent dimension over the test set;
    /// the power constraint keeps this near 1.
    pub fn mean_power_per_dim(&self) -> f64 {
        let mut total = 0.0;
        for &v in self.z_norm.data() {
            let x = v.to_f64();
            total += x * x;
        }
        total / self.z_norm.rows() as f64 / self.z_norm.cols() as f64
    }

    /// Evaluates at one fixed SNR; `bypass` short-circuits the channel so
    /// the received latent equals the transmitted one bit for bit.
    pub fn evaluate(&self, snr_db: f64, bypass: bool, eval_seed: u64) -> Result<MetricsRecord> {
        let n = self.samples.len();
        let d = self.z_norm.cols();
        let sigma = noise_sigma::<F>(snr_db);

        let mut sum_chamfer_mean = 0.0;
        let mut sum_chamfer_sum = 0.0;
        let mut correct = 0usize;

        let mut base = 0;
        while base < n {
            let len = EVAL_CHUNK.min(n - base);
            let mut z = Mat::zeros(len, d);
            for r in 0..len {
                let row = z.row_mut(r);
                row.copy_from_slice(self.z_norm.row(base + r));
                if !bypass {
                    // Per-sample noise stream: identical across SNR points.
                    let mut rng = ChaCha8Rng::seed_from_u64(eval_seed);
                    rng.set_stream((base + r) as u64);
                    let noise = standard_normal_vec::<F, _>(&mut rng, d);
                    for (v, nstd) in row.iter_mut().zip(&noise) {
                        *v += sigma * *nstd;
                    }
                }
            }
            let (recon, logits) = self.model.decode_eval(&z);
            for r in 0..len {
                let sample = &self.samples[base + r];
                let xhat = reshape_points(recon.row(r));
                let matches = chamfer_with_matches(sample.cloud.points(), &xhat)?;
                sum_chamfer_sum += matches.value(ChamferForm::Sum).to_f64();
                sum_chamfer_mean += matches.value(ChamferForm::Mean).to_f64();

                let lrow = logits.row(r);
                let mut argmax = 0;
                for c in 1..lrow.len() {
                    if lrow[c] > lrow[argmax] {
                        argmax = c;
                    }
                }
                if argmax == self.task.label_of(sample) {
                    correct += 1;
                }
            }
            base += len;
        }

        Ok(MetricsRecord {
            snr_db: if bypass { f64::INFINITY } else { snr_db },
            chamfer_mean: sum_chamfer_mean / n as f64,
            chamfer_sum: sum_chamfer_sum / n as f64,
            accuracy: correct as f64 / n as f64,
            n_samples: n,
            fingerprint: self.fingerprint.clone(),
        })
    }
}

/// One-shot evaluation at a fixed SNR.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_at_snr<F: Scalar>(
    model: &Model<F>,
    power_norm: &PowerNormState<F>,
    test_set: &[LabeledSample<F>],
    task: Task,
    snr_db: f64,
    bypass: bool,
    eval_seed: u64,
    fingerprint: &str,
) -> Result<MetricsRecord> {
    Evaluator::new(model, power_norm, test_set, task, fingerprint)?
        .evaluate(snr_db, bypass, eval_seed)
}

/// Evaluates every SNR in `snr_list_db`; one record per entry, in order.
pub fn sweep<F: Scalar>(
    model: &Model<F>,
    power_norm: &PowerNormState<F>,
    test_set: &[LabeledSample<F>],
    task: Task,
    snr_list_db: &[f64],
    eval_seed: u64,
    fingerprint: &str,
) -> Result<Vec<MetricsRecord>> {
    if snr_list_db.is_empty() {
        return Err(Error::InvalidConfig("sweep needs a non-empty SNR list"));
    }
    let evaluator = Evaluator::new(model, power_norm, test_set, task, fingerprint)?;
    snr_list_db
        .iter()
        .map(|&snr| evaluator.evaluate(snr, false, eval_seed))
        .collect()
}
