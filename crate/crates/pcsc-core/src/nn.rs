//! Neural building blocks with hand-written forward/backward passes.
//!
//! The model is small enough that explicit backprop beats pulling in an
//! autodiff framework: every block returns a cache of exactly what its
//! backward pass needs, gradients accumulate into the owning
//! [`ParamTensor`]s in a fixed order, and the whole stack stays
//! bit-deterministic and checkable against finite differences.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::mat::Mat;
use crate::scalar::Scalar;

/// A named trainable tensor and its gradient accumulator.
#[derive(Debug, Clone)]
pub struct ParamTensor<F> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub value: Vec<F>,
    pub grad: Vec<F>,
}

impl<F: Scalar> ParamTensor<F> {
    pub fn zeros(name: String, rows: usize, cols: usize) -> Self {
        ParamTensor {
            name,
            rows,
            cols,
            value: vec![F::zero(); rows * cols],
            grad: vec![F::zero(); rows * cols],
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.value.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grad {
            *g = F::zero();
        }
    }
}

/// A named non-trainable state tensor (running statistics).
#[derive(Debug, Clone)]
pub struct Buffer<F> {
    pub name: String,
    pub value: Vec<F>,
}

/// Fully connected layer, `y = x @ w + b` with `w` of shape `in_dim x out_dim`.
#[derive(Debug, Clone)]
pub struct Affine<F> {
    pub w: ParamTensor<F>,
    pub b: ParamTensor<F>,
}

impl<F: Scalar> Affine<F> {
    pub fn new(name: &str, in_dim: usize, out_dim: usize) -> Self {
        Affine {
            w: ParamTensor::zeros(format!("{name}.w"), in_dim, out_dim),
            b: ParamTensor::zeros(format!("{name}.b"), 1, out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.rows
    }

    pub fn out_dim(&self) -> usize {
        self.w.cols
    }

    /// Uniform fan-in initialization: U(-1/sqrt(in), 1/sqrt(in)) for both
    /// weights and bias.
    pub fn init_uniform<R: Rng>(&mut self, rng: &mut R) {
        let bound = 1.0 / (self.w.rows as f64).sqrt();
        for v in &mut self.w.value {
            *v = F::from_f64(rng.gen_range(-bound..bound));
        }
        for v in &mut self.b.value {
            *v = F::from_f64(rng.gen_range(-bound..bound));
        }
    }

    pub fn forward(&self, x: &Mat<F>) -> Mat<F> {
        debug_assert_eq!(x.cols(), self.w.rows);
        let mut y = x.matmul_raw(&self.w.value, self.w.rows, self.w.cols);
        y.add_row_bias(&self.b.value);
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    /// `x` must be the forward input.
    pub fn backward(&mut self, x: &Mat<F>, grad_out: &Mat<F>) -> Mat<F> {
        debug_assert_eq!(grad_out.cols(), self.w.cols);
        debug_assert_eq!(grad_out.rows(), x.rows());

        let dw = x.t_matmul(grad_out); // in_dim x out_dim
        for (g, d) in self.w.grad.iter_mut().zip(dw.data()) {
            *g += *d;
        }
        for (g, d) in self.b.grad.iter_mut().zip(&grad_out.col_sums()) {
            *g += *d;
        }
        grad_out.matmul_t_raw(&self.w.value, self.w.rows, self.w.cols)
    }

    pub fn for_each_param(&mut self, f: &mut impl FnMut(&mut ParamTensor<F>)) {
        f(&mut self.w);
        f(&mut self.b);
    }
}

/// Feature-wise standardization with learned scale/shift.
///
/// Train mode normalizes by batch statistics over all rows and updates the
/// running averages; eval mode reads the running averages only.
#[derive(Debug, Clone)]
pub struct BatchNorm<F> {
    pub gamma: ParamTensor<F>,
    pub beta: ParamTensor<F>,
    pub running_mean: Buffer<F>,
    pub running_var: Buffer<F>,
    pub momentum: F,
    pub eps: F,
}

/// What the batch-norm backward pass needs from the forward pass.
#[derive(Debug)]
pub struct BatchNormCache<F> {
    pub xhat: Mat<F>,
    pub inv_std: Vec<F>,
}

impl<F: Scalar> BatchNorm<F> {
    pub fn new(name: &str, dim: usize) -> Self {
        let mut gamma = ParamTensor::zeros(format!("{name}.gamma"), 1, dim);
        for v in &mut gamma.value {
            *v = F::one();
        }
        BatchNorm {
            gamma,
            beta: ParamTensor::zeros(format!("{name}.beta"), 1, dim),
            running_mean: Buffer {
                name: format!("{name}.running_mean"),
                value: vec![F::zero(); dim],
            },
            running_var: Buffer {
                name: format!("{name}.running_var"),
                value: vec![F::one(); dim],
            },
            momentum: F::from_f64(0.1),
            eps: F::from_f64(1e-5),
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.cols
    }

    pub fn forward_train(&mut self, x: &Mat<F>) -> (Mat<F>, BatchNormCache<F>) {
        let n = x.rows();
        let d = x.cols();
        debug_assert_eq!(d, self.dim());
        assert!(n >= 2, "batch statistics need at least 2 rows");

        let mean = x.col_means();
        let mut var = vec![F::zero(); d];
        {
            let mean = &mean[..d];
            let var = &mut var[..d];
            for row in x.data().chunks_exact(d) {
                for c in 0..d {
                    let dv = row[c] - mean[c];
                    var[c] += dv * dv;
                }
            }
        }
        let inv_n = F::one() / F::from_usize(n);
        for v in &mut var {
            *v *= inv_n;
        }

        let inv_std: Vec<F> = var
            .iter()
            .map(|&v| F::one() / (v + self.eps).sqrt())
            .collect();

        let mut xhat = Mat::zeros(n, d);
        let mut out = Mat::zeros(n, d);
        {
            let mean = &mean[..d];
            let inv_std = &inv_std[..d];
            let gamma = &self.gamma.value[..d];
            let beta = &self.beta.value[..d];
            for ((xr, hr), or) in x
                .data()
                .chunks_exact(d)
                .zip(xhat.data_mut().chunks_exact_mut(d))
                .zip(out.data_mut().chunks_exact_mut(d))
            {
                for c in 0..d {
                    let h = (xr[c] - mean[c]) * inv_std[c];
                    hr[c] = h;
                    or[c] = gamma[c] * h + beta[c];
                }
            }
        }

        // Running averages use the unbiased variance, as is conventional.
        let unbias = F::from_usize(n) / F::from_usize(n - 1);
        let m = self.momentum;
        for c in 0..d {
            self.running_mean.value[c] = (F::one() - m) * self.running_mean.value[c] + m * mean[c];
            self.running_var.value[c] =
                (F::one() - m) * self.running_var.value[c] + m * var[c] * unbias;
        }

        (out, BatchNormCache { xhat, inv_std })
    }

    pub fn forward_eval(&self, x: &Mat<F>) -> Mat<F> {
        let n = x.rows();
        let d = x.cols();
        debug_assert_eq!(d, self.dim());
        let inv_std: Vec<F> = self
            .running_var
            .value
            .iter()
            .map(|&v| F::one() / (v + self.eps).sqrt())
            .collect();
        let mut out = Mat::zeros(n, d);
        let inv_std = &inv_std[..d];
        let mean = &self.running_mean.value[..d];
        let gamma = &self.gamma.value[..d];
        let beta = &self.beta.value[..d];
        for (xr, or) in x
            .data()
            .chunks_exact(d)
            .zip(out.data_mut().chunks_exact_mut(d))
        {
            for c in 0..d {
                or[c] = gamma[c] * (xr[c] - mean[c]) * inv_std[c] + beta[c];
            }
        }
        out
    }

    pub fn backward(&mut self, cache: &BatchNormCache<F>, grad_out: &Mat<F>) -> Mat<F> {
        let n = grad_out.rows();
        let d = grad_out.cols();
        debug_assert_eq!(cache.xhat.rows(), n);

        let mut sum_g = vec![F::zero(); d];
        let mut sum_gx = vec![F::zero(); d];
        {
            let sum_g = &mut sum_g[..d];
            let sum_gx = &mut sum_gx[..d];
            for (g, h) in grad_out
                .data()
                .chunks_exact(d)
                .zip(cache.xhat.data().chunks_exact(d))
            {
                for c in 0..d {
                    sum_g[c] += g[c];
                    sum_gx[c] += g[c] * h[c];
                }
            }
        }
        for c in 0..d {
            self.beta.grad[c] += sum_g[c];
            self.gamma.grad[c] += sum_gx[c];
        }

        // dxhat = g * gamma;
        // dx = inv_std * (dxhat - (sum(dxhat) + xhat * sum(dxhat*xhat)) / n).
        let nf = F::from_usize(n);
        let mut dx = Mat::zeros(n, d);
        // Per-channel constants hoisted out of the row loop.
        let mut k1 = vec![F::zero(); d]; // inv_std * gamma
        let mut k2 = vec![F::zero(); d]; // inv_std * sum_dh / n
        let mut k3 = vec![F::zero(); d]; // inv_std * sum_dhx / n
        for c in 0..d {
            let gamma = self.gamma.value[c];
            let is = cache.inv_std[c];
            k1[c] = is * gamma;
            k2[c] = is * sum_g[c] * gamma / nf;
            k3[c] = is * sum_gx[c] * gamma / nf;
        }
        {
            let k1 = &k1[..d];
            let k2 = &k2[..d];
            let k3 = &k3[..d];
            for ((g, h), o) in grad_out
                .data()
                .chunks_exact(d)
                .zip(cache.xhat.data().chunks_exact(d))
                .zip(dx.data_mut().chunks_exact_mut(d))
            {
                for c in 0..d {
                    o[c] = k1[c] * g[c] - k2[c] - h[c] * k3[c];
                }
            }
        }
        dx
    }

    pub fn for_each_param(&mut self, f: &mut impl FnMut(&mut ParamTensor<F>)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }

    pub fn for_each_buffer(&mut self, f: &mut impl FnMut(&mut Buffer<F>)) {
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}

/// Rectified linear unit, elementwise.
pub fn relu<F: Scalar>(x: &Mat<F>) -> Mat<F> {
    let mut y = x.clone();
    relu_in_place(&mut y);
    y
}

/// In-place ReLU; used on owned activations to avoid copies.
pub fn relu_in_place<F: Scalar>(x: &mut Mat<F>) {
    for v in x.data_mut() {
        if *v < F::zero() {
            *v = F::zero();
        }
    }
}

/// Backward through ReLU given the forward *output*.
pub fn relu_backward<F: Scalar>(output: &Mat<F>, grad_out: &Mat<F>) -> Mat<F> {
    let mut dx = grad_out.clone();
    relu_backward_in_place(output, &mut dx);
    dx
}

/// In-place variant of [`relu_backward`] for owned gradients.
pub fn relu_backward_in_place<F: Scalar>(output: &Mat<F>, grad: &mut Mat<F>) {
    for (d, y) in grad.data_mut().iter_mut().zip(output.data()) {
        if !(*y > F::zero()) {
            *d = F::zero();
        }
    }
}

/// One hidden layer: affine, feature standardization, ReLU.
#[derive(Debug, Clone)]
pub struct HiddenLayer<F> {
    pub affine: Affine<F>,
    pub bn: BatchNorm<F>,
}

impl<F: Scalar> HiddenLayer<F> {
    pub fn new(name: &str, in_dim: usize, out_dim: usize) -> Self {
        HiddenLayer {
            affine: Affine::new(name, in_dim, out_dim),
            bn: BatchNorm::new(name, out_dim),
        }
    }

    pub fn for_each_param(&mut self, f: &mut impl FnMut(&mut ParamTensor<F>)) {
        self.affine.for_each_param(f);
        self.bn.for_each_param(f);
    }

    pub fn for_each_buffer(&mut self, f: &mut impl FnMut(&mut Buffer<F>)) {
        self.bn.for_each_buffer(f);
    }
}

/// A stack of hidden layers sharing one cache structure.
#[derive(Debug, Clone)]
pub struct MlpChain<F> {
    pub layers: Vec<HiddenLayer<F>>,
}

/// Forward activations of an [`MlpChain`].
///
/// Each activation is stored exactly once: layer `l`'s input is the chain
/// input for `l == 0` and `relu_outs[l - 1]` otherwise.
pub struct MlpChainCache<F> {
    pub chain_input: Mat<F>,
    /// `relu_outs[l]` is the post-activation output of layer `l`.
    pub relu_outs: Vec<Mat<F>>,
    pub bn_caches: Vec<BatchNormCache<F>>,
}

impl<F: Scalar> MlpChainCache<F> {
    #[inline]
    pub fn layer_input(&self, l: usize) -> &Mat<F> {
        if l == 0 {
            &self.chain_input
        } else {
            &self.relu_outs[l - 1]
        }
    }

    /// Final chain output.
    #[inline]
    pub fn output(&self) -> &Mat<F> {
        self.relu_outs.last().expect("non-empty chain")
    }
}

impl<F: Scalar> MlpChain<F> {
    /// `widths` = `[in, h1, h2, ..]`; builds `widths.len() - 1` hidden layers.
    pub fn new(name: &str, widths: &[usize]) -> Self {
        assert!(widths.len() >= 2, "chain needs at least one layer");
        let layers = (0..widths.len() - 1)
            .map(|i| HiddenLayer::new(&format!("{name}.{i}"), widths[i], widths[i + 1]))
            .collect();
        MlpChain { layers }
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty chain").affine.out_dim()
    }

    pub fn init_uniform<R: Rng>(&mut self, rng: &mut R) {
        for l in &mut self.layers {
            l.affine.init_uniform(rng);
        }
    }

    /// Returns the cache; read the chain output via [`MlpChainCache::output`].
    pub fn forward_train(&mut self, x: Mat<F>) -> MlpChainCache<F> {
        let mut cache = MlpChainCache {
            chain_input: x,
            relu_outs: Vec::with_capacity(self.layers.len()),
            bn_caches: Vec::with_capacity(self.layers.len()),
        };
        for (l, layer) in self.layers.iter_mut().enumerate() {
            let pre = layer.affine.forward(cache.layer_input(l));
            let (mut bn_out, bn_cache) = layer.bn.forward_train(&pre);
            drop(pre);
            relu_in_place(&mut bn_out);
            cache.bn_caches.push(bn_cache);
            cache.relu_outs.push(bn_out);
        }
        cache
    }

    pub fn forward_eval(&self, x: Mat<F>) -> Mat<F> {
        let mut cur = x;
        for layer in &self.layers {
            let pre = layer.affine.forward(&cur);
            let mut bn_out = layer.bn.forward_eval(&pre);
            relu_in_place(&mut bn_out);
            cur = bn_out;
        }
        cur
    }

    pub fn backward(&mut self, cache: &MlpChainCache<F>, grad_out: Mat<F>) -> Mat<F> {
        let mut grad = grad_out;
        for (l, layer) in self.layers.iter_mut().enumerate().rev() {
            relu_backward_in_place(&cache.relu_outs[l], &mut grad);
            let g_pre = layer.bn.backward(&cache.bn_caches[l], &grad);
            drop(grad);
            grad = layer.affine.backward(cache.layer_input(l), &g_pre);
        }
        grad
    }

    pub fn for_each_param(&mut self, f: &mut impl FnMut(&mut ParamTensor<F>)) {
        for l in &mut self.layers {
            l.for_each_param(f);
        }
    }

    pub fn for_each_buffer(&mut self, f: &mut impl FnMut(&mut Buffer<F>)) {
        for l in &mut self.layers {
            l.for_each_buffer(f);
        }
    }
}

/// Max over consecutive groups of `group_size` rows; returns the pooled
/// matrix and the winning row index per output element (first maximum wins).
pub fn max_pool_groups<F: Scalar>(x: &Mat<F>, group_size: usize) -> (Mat<F>, Vec<u32>) {
    assert!(group_size >= 1);
    assert_eq!(x.rows() % group_size, 0, "rows must divide into groups");
    let groups = x.rows() / group_size;
    let d = x.cols();
    let mut out = Mat::zeros(groups, d);
    let mut argmax = vec![0u32; groups * d];
    for g in 0..groups {
        let base = g * group_size;
        let o = out.row_mut(g);
        let am = &mut argmax[g * d..(g + 1) * d];
        o.copy_from_slice(x.row(base));
        for v in am.iter_mut() {
            *v = base as u32;
        }
        for r in base + 1..base + group_size {
            let row = x.row(r);
            for c in 0..d {
                if row[c] > o[c] {
                    o[c] = row[c];
                    am[c] = r as u32;
                }
            }
        }
    }
    (out, argmax)
}

/// Backward of [`max_pool_groups`]: routes each output gradient to the row
/// that won the max.
pub fn max_pool_groups_backward<F: Scalar>(
    grad_out: &Mat<F>,
    argmax: &[u32],
    in_rows: usize,
) -> Mat<F> {
    let d = grad_out.cols();
    let mut dx = Mat::zeros(in_rows, d);
    for g in 0..grad_out.rows() {
        let go = grad_out.row(g);
        let am = &argmax[g * d..(g + 1) * d];
        for c in 0..d {
            dx.row_mut(am[c] as usize)[c] += go[c];
        }
    }
    dx
}

/// Row-wise softmax, numerically stabilized.
pub fn softmax_rows<F: Scalar>(logits: &Mat<F>) -> Mat<F> {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let mut mx = row[0];
        for v in row.iter() {
            if *v > mx {
                mx = *v;
            }
        }
        let mut sum = F::zero();
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Cross-entropy of one probability row against an integer label, with the
/// probability clamped away from zero so the result is always finite.
pub fn cross_entropy<F: Scalar>(probs: &[F], label: usize) -> F {
    let p = probs[label].max(F::from_f64(1e-12));
    -p.ln()
}
