//! Composite loss, stratified splitting, Adam, and the end-to-end training
//! loop: encode, power-normalize, add channel noise at a per-batch SNR, run
//! both receiver branches, backpropagate the composite loss.
//!
//! Training is a single logical writer over parameters and channel state.
//! All randomness (shuffling, SNR draws, noise) comes from ChaCha streams
//! derived from the configured seed, and every reduction runs in a fixed
//! order, so identical configurations produce bit-identical results.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{
    awgn, power_normalize_backward, power_normalize_train, sample_training_snr, ChannelConfig,
    PowerNormState,
};
use crate::geometry::{chamfer_with_matches, ChamferMatches, FixedCloud};
use crate::mat::Mat;
use crate::model::{reshape_points, GroupingPlan, Model, ModelConfig};
use crate::nn::{cross_entropy, softmax_rows};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Which label a model is trained to predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Task {
    /// Six-way industrial object classification.
    #[default]
    Object,
    /// Binary welding-clamp presence detection.
    ClampDetection,
}

impl Task {
    pub fn label_of<F>(&self, sample: &LabeledSample<F>) -> usize {
        match self {
            Task::Object => sample.object_class,
            Task::ClampDetection => usize::from(sample.clamp_present),
        }
    }
}

/// A preprocessed cloud with both task labels.
#[derive(Debug, Clone)]
pub struct LabeledSample<F> {
    pub cloud: FixedCloud<F>,
    pub object_class: usize,
    pub clamp_present: bool,
}

/// Training hyperparameters and the architecture to train.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub task: Task,
    /// Weight of the classification term; 0 disables the semantic objective.
    pub lambda_cls: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Train fraction of the stratified split (callers split before `train`;
    /// recorded here as part of the experiment fingerprint).
    pub split_ratio: f64,
    pub seed: u64,
    pub channel: ChannelConfig,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        TrainConfig {
            model,
            task: Task::Object,
            lambda_cls: 1.0,
            learning_rate: 7e-4,
            batch_size: 16,
            epochs: 50,
            split_ratio: 0.7,
            seed: 0,
            channel: ChannelConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.channel.validate()?;
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig("batch size must be at least 2"));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::InvalidConfig("split ratio must be in (0, 1)"));
        }
        if !(self.lambda_cls >= 0.0) {
            return Err(Error::InvalidConfig("lambda_cls must be non-negative"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive"));
        }
        Ok(())
    }
}

/// Per-epoch aggregates over the training set.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_rec_sum: f64,
    pub loss_rec_mean: f64,
    pub loss_cls: f64,
    pub train_acc: f64,
}

/// One record per completed epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

/// Everything a training run produces.
pub struct TrainOutput<F> {
    pub model: Model<F>,
    pub power_norm: PowerNormState<F>,
    pub history: TrainHistory,
}

/// Loss terms of one sample.
#[derive(Debug, Clone, Copy)]
pub struct LossBreakdown<F> {
    pub total: F,
    pub rec_sum: F,
    pub rec_mean: F,
    pub cls: F,
}

/// Composite objective `L = L_rec + lambda_cls * L_cls` where `L_rec` is the
/// sum-form Chamfer distance and `L_cls` the categorical cross-entropy.
/// Returns all terms for logging.
pub fn composite_loss<F: Scalar>(
    x: &[[F; 3]],
    xhat: &[[F; 3]],
    label: usize,
    probs: &[F],
    lambda_cls: F,
) -> Result<LossBreakdown<F>> {
    if label >= probs.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: probs.len(),
        });
    }
    let matches = chamfer_with_matches(x, xhat)?;
    let rec_sum = matches.sum_ab + matches.sum_ba;
    let rec_mean = matches.sum_ab / F::from_usize(x.len()) + matches.sum_ba / F::from_usize(xhat.len());
    let cls = cross_entropy(probs, label);
    Ok(LossBreakdown {
        total: rec_sum + lambda_cls * cls,
        rec_sum,
        rec_mean,
        cls,
    })
}

/// Stratified split by object class: `ceil(ratio * n_c)` training samples
/// per class, deterministic for a fixed seed. Returns (train, test) index
/// lists, each sorted ascending.
pub fn split_dataset<F>(
    samples: &[LabeledSample<F>],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig("split ratio must be in (0, 1)"));
    }
    let n_classes = samples
        .iter()
        .map(|s| s.object_class + 1)
        .max()
        .unwrap_or(0);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, s) in samples.iter().enumerate() {
        by_class[s.object_class].push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut idxs) in by_class.into_iter().enumerate() {
        if idxs.is_empty() {
            continue;
        }
        if idxs.len() < 2 {
            return Err(Error::ClassTooSmall {
                class,
                count: idxs.len(),
            });
        }
        idxs.shuffle(&mut rng);
        // Tiny epsilon so exact products like 0.7 * 60 do not round up.
        let n_train = libm::ceil(ratio * idxs.len() as f64 - 1e-9) as usize;
        train.extend_from_slice(&idxs[..n_train]);
        test.extend_from_slice(&idxs[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Adam optimizer over the model's parameter list in declaration order.
/// Standard defaults: beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
pub struct Adam<F> {
    lr: F,
    beta1: F,
    beta2: F,
    eps: F,
    step_count: u32,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(model: &mut Model<F>, learning_rate: f64) -> Self {
        let mut sizes = Vec::new();
        model.for_each_param(&mut |p| sizes.push(p.len()));
        Adam {
            lr: F::from_f64(learning_rate),
            beta1: F::from_f64(0.9),
            beta2: F::from_f64(0.999),
            eps: F::from_f64(1e-8),
            step_count: 0,
            m: sizes.iter().map(|&s| vec![F::zero(); s]).collect(),
            v: sizes.iter().map(|&s| vec![F::zero(); s]).collect(),
        }
    }

    /// Applies one update from the gradients currently stored in the model.
    pub fn step(&mut self, model: &mut Model<F>) {
        self.step_count += 1;
        let bc1 = F::one() - self.beta1.powi(self.step_count as i32);
        let bc2 = F::one() - self.beta2.powi(self.step_count as i32);
        let (b1, b2) = (self.beta1, self.beta2);
        let (lr, eps) = (self.lr, self.eps);
        let mut idx = 0;
        let (ms, vs) = (&mut self.m, &mut self.v);
        model.for_each_param(&mut |p| {
            let m = &mut ms[idx];
            let v = &mut vs[idx];
            for ((w, g), (mi, vi)) in p
                .value
                .iter_mut()
                .zip(&p.grad)
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = b1 * *mi + (F::one() - b1) * *g;
                *vi = b2 * *vi + (F::one() - b2) * *g * *g;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
            idx += 1;
        });
    }
}

/// Gradient of the sum-form Chamfer distance with respect to the
/// reconstructed cloud, written into `grad` (flattened xyz), scaled by
/// `scale`.
fn chamfer_backward_into<F: Scalar>(
    x: &[[F; 3]],
    xhat: &[[F; 3]],
    matches: &ChamferMatches<F>,
    scale: F,
    grad: &mut [F],
) {
    let two = F::from_f64(2.0);
    // Direction X -> Xhat: each x pulls its matched xhat.
    for (i, &j) in matches.nn_ab.iter().enumerate() {
        for c in 0..3 {
            grad[3 * j + c] += scale * two * (xhat[j][c] - x[i][c]);
        }
    }
    // Direction Xhat -> X: each xhat is pulled toward its nearest x.
    for (j, &i) in matches.nn_ba.iter().enumerate() {
        for c in 0..3 {
            grad[3 * j + c] += scale * two * (xhat[j][c] - x[i][c]);
        }
    }
}

/// Statistics accumulated over one forward/backward batch.
struct BatchStats {
    loss_total: f64,
    loss_rec_sum: f64,
    loss_rec_mean: f64,
    loss_cls: f64,
    correct: usize,
}

/// Shared forward + loss + gradient assembly for one batch. Returns the
/// gradients w.r.t. the receiver outputs along with the loss statistics.
#[allow(clippy::type_complexity)]
fn batch_loss_and_output_grads<F: Scalar>(
    clouds: &[&FixedCloud<F>],
    labels: &[usize],
    recon: &Mat<F>,
    logits: &Mat<F>,
    lambda_cls: F,
) -> Result<(Mat<F>, Mat<F>, BatchStats)> {
    let b = clouds.len();
    let inv_b = F::one() / F::from_usize(b);
    let probs = softmax_rows(logits);
    let n_classes = logits.cols();

    let mut grad_recon = Mat::zeros(recon.rows(), recon.cols());
    let mut grad_logits = Mat::zeros(b, n_classes);
    let mut stats = BatchStats {
        loss_total: 0.0,
        loss_rec_sum: 0.0,
        loss_rec_mean: 0.0,
        loss_cls: 0.0,
        correct: 0,
    };

    for s in 0..b {
        let x = clouds[s].points();
        let xhat = reshape_points(recon.row(s));
        let matches = chamfer_with_matches(x, &xhat)?;
        let rec_sum = matches.sum_ab + matches.sum_ba;
        let rec_mean =
            matches.sum_ab / F::from_usize(x.len()) + matches.sum_ba / F::from_usize(xhat.len());
        let ce = cross_entropy(probs.row(s), labels[s]);

        stats.loss_rec_sum += rec_sum.to_f64();
        stats.loss_rec_mean += rec_mean.to_f64();
        stats.loss_cls += ce.to_f64();
        stats.loss_total += (rec_sum + lambda_cls * ce).to_f64();

        let pr = probs.row(s);
        let mut argmax = 0;
        for c in 1..n_classes {
            if pr[c] > pr[argmax] {
                argmax = c;
            }
        }
        if argmax == labels[s] {
            stats.correct += 1;
        }

        chamfer_backward_into(x, &xhat, &matches, inv_b, grad_recon.row_mut(s));
        let gl = grad_logits.row_mut(s);
        for c in 0..n_classes {
            let target = if c == labels[s] { F::one() } else { F::zero() };
            gl[c] = lambda_cls * inv_b * (pr[c] - target);
        }
    }
    Ok((grad_recon, grad_logits, stats))
}

/// End-to-end training over an already-split training set. Deterministic for
/// a fixed config: two identical calls produce bit-identical models,
/// channel state, and history.
pub fn train<F: Scalar>(samples: &[LabeledSample<F>], cfg: &TrainConfig) -> Result<TrainOutput<F>> {
    train_observed(samples, cfg, |_| {})
}

/// [`train`] with a per-epoch observer (progress reporting); the observer
/// has no influence on the run.
pub fn train_observed<F: Scalar>(
    samples: &[LabeledSample<F>],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutput<F>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let n_classes = cfg.model.n_classes;
    for s in samples {
        let label = cfg.task.label_of(s);
        if label >= n_classes {
            return Err(Error::LabelOutOfRange {
                label,
                classes: n_classes,
            });
        }
    }

    // Grouping depends only on geometry: build once, reuse every epoch.
    let plans: Vec<GroupingPlan<F>> = samples
        .iter()
        .map(|s| GroupingPlan::build(s.cloud.points(), &cfg.model.encoder))
        .collect::<Result<_>>()?;

    let mut model = Model::new(cfg.model.clone(), cfg.seed)?;
    let mut power_norm = PowerNormState::new(model.latent_dim());
    let mut adam = Adam::new(&mut model, cfg.learning_rate);

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut snr_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    snr_rng.set_stream(2);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(3);

    let lambda = F::from_f64(cfg.lambda_cls);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_stats = BatchStats {
            loss_total: 0.0,
            loss_rec_sum: 0.0,
            loss_rec_mean: 0.0,
            loss_cls: 0.0,
            correct: 0,
        };
        let mut seen = 0usize;

        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            if batch.len() < 2 {
                continue; // batch statistics need at least two samples
            }
            let clouds: Vec<&FixedCloud<F>> = batch.iter().map(|&i| &samples[i].cloud).collect();
            let batch_plans: Vec<&GroupingPlan<F>> = batch.iter().map(|&i| &plans[i]).collect();
            let labels: Vec<usize> = batch
                .iter()
                .map(|&i| cfg.task.label_of(&samples[i]))
                .collect();

            model.zero_grads();
            let (z, enc_trace) = model.encode_train(&batch_plans)?;
            let (z_norm, pn_cache) = power_normalize_train(&z, &mut power_norm)?;
            let z_received = if cfg.channel.bypass {
                z_norm
            } else {
                let snr_db = sample_training_snr(&cfg.channel, &mut snr_rng);
                awgn(&z_norm, snr_db, &mut noise_rng)
            };
            let (recon, logits, dec_trace) = model.decode_train(&z_received);

            let (grad_recon, grad_logits, stats) =
                batch_loss_and_output_grads(&clouds, &labels, &recon, &logits, lambda)?;
            if !stats.loss_total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }

            let dz = model.decoders_backward(&dec_trace, &grad_recon, &grad_logits);
            // AWGN is additive: its input gradient is the output gradient.
            let dz = power_normalize_backward(&pn_cache, &dz);
            model.encoder_backward(&batch_plans, &enc_trace, &dz)?;
            adam.step(&mut model);

            epoch_stats.loss_total += stats.loss_total;
            epoch_stats.loss_rec_sum += stats.loss_rec_sum;
            epoch_stats.loss_rec_mean += stats.loss_rec_mean;
            epoch_stats.loss_cls += stats.loss_cls;
            epoch_stats.correct += stats.correct;
            seen += batch.len();
        }

        let n = seen.max(1) as f64;
        let record = EpochRecord {
            epoch,
            loss_total: epoch_stats.loss_total / n,
            loss_rec_sum: epoch_stats.loss_rec_sum / n,
            loss_rec_mean: epoch_stats.loss_rec_mean / n,
            loss_cls: epoch_stats.loss_cls / n,
            train_acc: epoch_stats.correct as f64 / n,
        };
        on_epoch(&record);
        history.epochs.push(record);
    }

    Ok(TrainOutput {
        model,
        power_norm,
        history,
    })
}
