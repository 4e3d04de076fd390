//! Power normalization of the latent vector and the additive white Gaussian
//! noise channel.
//!
//! The transmitted vector must satisfy the average power constraint
//! `E[||z||^2] = D` so the SNR definition is well posed: with unit
//! per-dimension signal power, `SNR = 1 / sigma^2`, i.e.
//! `sigma^2 = 10^(-snr_db / 10)`.
//!
//! Train mode standardizes each latent dimension by its batch statistics,
//! which makes the batch-average squared norm equal D exactly (up to
//! rounding), and updates running statistics. Eval mode standardizes by the
//! running statistics and leaves the state untouched.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::mat::Mat;
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Variance floor below which a latent dimension counts as constant and is
/// only mean-centered (scaled by a fixed guard) instead of standardized.
const VAR_GUARD: f64 = 1e-12;
const GUARD_DENOM: f64 = 1e-6;

/// SNR schedule and channel options.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    /// SNR values (dB) sampled uniformly per training batch.
    pub training_snr_set_db: Vec<f64>,
    /// Fixed SNR (dB) used in evaluation runs.
    pub eval_snr_db: f64,
    /// Skip the channel entirely: the received latent equals the transmitted
    /// one bit for bit.
    pub bypass: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            training_snr_set_db: vec![-4.0, -2.0, 0.0, 2.0, 4.0, 6.0, 8.0],
            eval_snr_db: 8.0,
            bypass: false,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.training_snr_set_db.is_empty() {
            return Err(Error::InvalidConfig("training SNR set must be non-empty"));
        }
        Ok(())
    }
}

/// Running per-dimension statistics of the transmitted latent.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerNormState<F> {
    pub running_mean: Vec<F>,
    pub running_var: Vec<F>,
    pub momentum: F,
}

impl<F: Scalar> PowerNormState<F> {
    pub fn new(dim: usize) -> Self {
        PowerNormState {
            running_mean: vec![F::zero(); dim],
            running_var: vec![F::one(); dim],
            momentum: F::from_f64(0.1),
        }
    }

    pub fn dim(&self) -> usize {
        self.running_mean.len()
    }
}

/// Forward cache of a train-mode power normalization.
pub struct PowerNormCache<F> {
    xhat: Mat<F>,
    denom: Vec<F>,
    guarded: Vec<bool>,
}

/// Train-mode power normalization: per-dimension standardization by batch
/// statistics. Afterwards the batch-mean of `||z||^2` equals D up to
/// rounding (exactly, for every non-degenerate dimension); running
/// statistics are updated.
pub fn power_normalize_train<F: Scalar>(
    z: &Mat<F>,
    state: &mut PowerNormState<F>,
) -> Result<(Mat<F>, PowerNormCache<F>)> {
    let n = z.rows();
    let d = z.cols();
    if n < 2 {
        return Err(Error::InvalidConfig(
            "train-mode power normalization needs a batch of at least 2",
        ));
    }
    debug_assert_eq!(d, state.dim());

    let mean = z.col_means();
    let mut var = vec![F::zero(); d];
    for r in 0..n {
        let row = z.row(r);
        for c in 0..d {
            let dv = row[c] - mean[c];
            var[c] += dv * dv;
        }
    }
    let inv_n = F::one() / F::from_usize(n);
    for v in &mut var {
        *v *= inv_n;
    }

    let guard = F::from_f64(VAR_GUARD);
    let mut denom = Vec::with_capacity(d);
    let mut guarded = Vec::with_capacity(d);
    for &v in &var {
        if v < guard {
            denom.push(F::from_f64(GUARD_DENOM));
            guarded.push(true);
        } else {
            denom.push(v.sqrt());
            guarded.push(false);
        }
    }

    let mut out = Mat::zeros(n, d);
    for r in 0..n {
        let zr = z.row(r);
        let or = out.row_mut(r);
        for c in 0..d {
            or[c] = (zr[c] - mean[c]) / denom[c];
        }
    }

    let m = state.momentum;
    let unbias = F::from_usize(n) / F::from_usize(n - 1);
    for c in 0..d {
        state.running_mean[c] = (F::one() - m) * state.running_mean[c] + m * mean[c];
        state.running_var[c] = (F::one() - m) * state.running_var[c] + m * var[c] * unbias;
    }

    let xhat = out.clone();
    Ok((out, PowerNormCache { xhat, denom, guarded }))
}

/// Backward of [`power_normalize_train`].
pub fn power_normalize_backward<F: Scalar>(
    cache: &PowerNormCache<F>,
    grad_out: &Mat<F>,
) -> Mat<F> {
    let n = grad_out.rows();
    let d = grad_out.cols();
    let nf = F::from_usize(n);

    let mut sum_g = vec![F::zero(); d];
    let mut sum_gx = vec![F::zero(); d];
    for r in 0..n {
        let g = grad_out.row(r);
        let h = cache.xhat.row(r);
        for c in 0..d {
            sum_g[c] += g[c];
            sum_gx[c] += g[c] * h[c];
        }
    }

    let mut dx = Mat::zeros(n, d);
    for r in 0..n {
        let g = grad_out.row(r);
        let h = cache.xhat.row(r);
        let o = dx.row_mut(r);
        for c in 0..d {
            o[c] = if cache.guarded[c] {
                // Constant denominator: only the mean subtraction couples rows.
                (g[c] - sum_g[c] / nf) / cache.denom[c]
            } else {
                (g[c] - (sum_g[c] + h[c] * sum_gx[c]) / nf) / cache.denom[c]
            };
        }
    }
    dx
}

/// Eval-mode power normalization: standardization by running statistics.
/// Stateless read; calling twice on the same input gives identical output.
pub fn power_normalize_eval<F: Scalar>(z: &Mat<F>, state: &PowerNormState<F>) -> Mat<F> {
    let d = z.cols();
    debug_assert_eq!(d, state.dim());
    let guard = F::from_f64(VAR_GUARD);
    let denom: Vec<F> = state
        .running_var
        .iter()
        .map(|&v| v.max(guard).sqrt())
        .collect();
    let mut out = Mat::zeros(z.rows(), d);
    for r in 0..z.rows() {
        let zr = z.row(r);
        let or = out.row_mut(r);
        for c in 0..d {
            or[c] = (zr[c] - state.running_mean[c]) / denom[c];
        }
    }
    out
}

/// Per-dimension noise standard deviation for a given SNR in dB.
#[inline]
pub fn noise_sigma<F: Scalar>(snr_db: f64) -> F {
    F::from_f64(libm::pow(10.0, -snr_db / 20.0))
}

/// Per-dimension noise variance for a given SNR in dB.
#[inline]
pub fn noise_variance(snr_db: f64) -> f64 {
    libm::pow(10.0, -snr_db / 10.0)
}

/// Draws i.i.d. standard normal values; always consumes f64 draws from the
/// stream so f32 and f64 models see the same noise realization.
pub fn standard_normal_vec<F: Scalar, R: Rng>(rng: &mut R, len: usize) -> Vec<F> {
    (0..len)
        .map(|_| F::from_f64(rng.sample::<f64, _>(StandardNormal)))
        .collect()
}

/// AWGN channel: `z_noisy = z + n`, `n ~ N(0, sigma^2 I)` with
/// `sigma^2 = 10^(-snr_db/10)`. The gradient of the output with respect to
/// `z` is the identity, so no backward function is needed.
pub fn awgn<F: Scalar, R: Rng>(z: &Mat<F>, snr_db: f64, rng: &mut R) -> Mat<F> {
    let sigma = noise_sigma::<F>(snr_db);
    let mut out = z.clone();
    for v in out.data_mut() {
        *v += sigma * F::from_f64(rng.sample::<f64, _>(StandardNormal));
    }
    out
}

/// Uniform draw from the configured training SNR set; one draw per batch.
pub fn sample_training_snr<R: Rng>(cfg: &ChannelConfig, rng: &mut R) -> f64 {
    let i = rng.gen_range(0..cfg.training_snr_set_db.len());
    cfg.training_snr_set_db[i]
}
