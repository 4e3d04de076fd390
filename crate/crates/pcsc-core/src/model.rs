//! Transmitter and receiver: a three-level set-abstraction encoder that maps
//! a fixed-size cloud to a D-dimensional latent vector, plus the two parallel
//! receiver branches (fully connected geometric decoder and classifier).
//!
//! Centroid selection and neighbor grouping depend only on the input
//! geometry, never on parameters, so they are computed once per sample as a
//! [`GroupingPlan`] and reused across epochs. Gradients flow through gathered
//! features; index selection is piecewise constant and treated as such.
//!
//! The receiver sees nothing but the received latent: `decode_geometry` and
//! `decode_semantic` take only `(z, params)`, so transmitter-receiver
//! separation is enforced by the interface itself.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{self, FixedCloud, FpsStartRule};
use crate::mat::Mat;
use crate::nn::{
    max_pool_groups, max_pool_groups_backward, softmax_rows, Affine, Buffer, MlpChain,
    MlpChainCache, ParamTensor,
};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// One set-abstraction level: sample `n_centroids` by farthest point
/// sampling, group `k_neighbors` by kNN, run the shared MLP, max-pool per
/// group. `n_centroids == 0` marks the final global level that pools over
/// all remaining points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaLayerSpec {
    pub n_centroids: usize,
    pub k_neighbors: usize,
    pub mlp_widths: Vec<usize>,
}

impl SaLayerSpec {
    pub fn local(n_centroids: usize, k_neighbors: usize, mlp_widths: &[usize]) -> Self {
        SaLayerSpec {
            n_centroids,
            k_neighbors,
            mlp_widths: mlp_widths.to_vec(),
        }
    }

    pub fn global(mlp_widths: &[usize]) -> Self {
        SaLayerSpec {
            n_centroids: 0,
            k_neighbors: 0,
            mlp_widths: mlp_widths.to_vec(),
        }
    }

    pub fn is_global(&self) -> bool {
        self.n_centroids == 0
    }
}

/// Encoder architecture: stacked SA levels then fully connected head layers
/// ending in the latent dimension D.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    pub n_points: usize,
    pub sa_layers: Vec<SaLayerSpec>,
    /// Hidden head widths followed by the latent dimension, e.g. `[512, D]`.
    pub head_widths: Vec<usize>,
    pub fps_start: FpsStartRule,
}

impl EncoderConfig {
    /// The evaluated architecture: 2048 input points, SA levels
    /// (512, 32, [64, 64, 128]) and (128, 32, [128, 128, 256]), a global
    /// level [256, 512, 1024], head [512, D].
    pub fn standard(latent_dim: usize) -> Self {
        EncoderConfig {
            n_points: 2048,
            sa_layers: vec![
                SaLayerSpec::local(512, 32, &[64, 64, 128]),
                SaLayerSpec::local(128, 32, &[128, 128, 256]),
                SaLayerSpec::global(&[256, 512, 1024]),
            ],
            head_widths: vec![512, latent_dim],
            fps_start: FpsStartRule::MaxCentroidDist,
        }
    }

    pub fn latent_dim(&self) -> usize {
        *self.head_widths.last().expect("non-empty head")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 {
            return Err(Error::InvalidConfig("encoder needs n_points >= 1"));
        }
        if self.head_widths.is_empty() {
            return Err(Error::InvalidConfig("encoder head must end in D"));
        }
        let (last, local) = match self.sa_layers.split_last() {
            Some(split) => split,
            None => return Err(Error::InvalidConfig("encoder needs SA layers")),
        };
        if !last.is_global() {
            return Err(Error::InvalidConfig("final SA layer must be global"));
        }
        let mut avail = self.n_points;
        for spec in local {
            if spec.is_global() {
                return Err(Error::InvalidConfig("only the final SA layer may be global"));
            }
            if spec.mlp_widths.is_empty() {
                return Err(Error::InvalidConfig("SA layer needs MLP widths"));
            }
            if spec.n_centroids > avail || spec.k_neighbors > avail || spec.k_neighbors == 0 {
                return Err(Error::InvalidConfig(
                    "SA layer centroid/neighbor counts exceed available points",
                ));
            }
            avail = spec.n_centroids;
        }
        if last.mlp_widths.is_empty() {
            return Err(Error::InvalidConfig("SA layer needs MLP widths"));
        }
        Ok(())
    }
}

/// Full architecture: encoder, geometric decoder and classifier widths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Hidden widths of the geometric decoder; output is `n_points * 3`.
    pub rec_hidden: Vec<usize>,
    /// Hidden widths of the classifier; output is `n_classes`.
    pub cls_hidden: Vec<usize>,
    pub n_classes: usize,
}

impl ModelConfig {
    /// The evaluated receiver: geometric decoder (D, 512, 1024, 6144) and
    /// classifier (D, 128, C) with softmax.
    pub fn standard(latent_dim: usize, n_classes: usize) -> Self {
        ModelConfig {
            encoder: EncoderConfig::standard(latent_dim),
            rec_hidden: vec![512, 1024],
            cls_hidden: vec![128],
            n_classes,
        }
    }

    /// Tiny architecture (8 points, D=4, C=2, widths <= 8) used by the
    /// self-test suite; small enough for finite-difference gradient checks.
    pub fn miniature() -> Self {
        ModelConfig {
            encoder: EncoderConfig {
                n_points: 8,
                sa_layers: vec![
                    SaLayerSpec::local(4, 2, &[4, 4]),
                    SaLayerSpec::local(2, 2, &[4, 8]),
                    SaLayerSpec::global(&[8, 8]),
                ],
                head_widths: vec![8, 4],
                fps_start: FpsStartRule::MaxCentroidDist,
            },
            rec_hidden: vec![8, 8],
            cls_hidden: vec![8],
            n_classes: 2,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.latent_dim()
    }

    pub fn n_points(&self) -> usize {
        self.encoder.n_points
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.rec_hidden.is_empty() || self.cls_hidden.is_empty() {
            return Err(Error::InvalidConfig("decoders need at least one hidden layer"));
        }
        if self.n_classes < 2 {
            return Err(Error::InvalidConfig("need at least two classes"));
        }
        Ok(())
    }
}

/// Parameter-independent grouping structure of one sample: FPS centroids,
/// kNN neighbor indices and centered neighbor offsets per local level, and
/// the coordinates entering the global level.
#[derive(Debug, Clone)]
pub struct GroupingPlan<F> {
    local: Vec<LocalLevelPlan<F>>,
    global_coords: Mat<F>,
}

#[derive(Debug, Clone)]
struct LocalLevelPlan<F> {
    m_prev: usize,
    n_centroids: usize,
    k: usize,
    /// Flattened `[n_centroids * k]` indices into the previous level.
    neighbor_idx: Vec<u32>,
    /// Neighbor coordinates relative to their centroid, `[n_centroids*k, 3]`.
    rel: Mat<F>,
}

impl<F: Scalar> GroupingPlan<F> {
    pub fn build(points: &[[F; 3]], cfg: &EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        if points.len() != cfg.n_points {
            return Err(Error::WrongPointCount {
                expected: cfg.n_points,
                actual: points.len(),
            });
        }
        let mut current: Vec<[F; 3]> = points.to_vec();
        let mut local = Vec::new();
        for spec in &cfg.sa_layers {
            if spec.is_global() {
                break;
            }
            let centroid_idx =
                geometry::farthest_point_sample(&current, spec.n_centroids, cfg.fps_start)?;
            let groups = geometry::knn_group(&current, &centroid_idx, spec.k_neighbors)?;

            let m = spec.n_centroids;
            let k = spec.k_neighbors;
            let mut neighbor_idx = Vec::with_capacity(m * k);
            let mut rel = Mat::zeros(m * k, 3);
            for (g, (&c, group)) in centroid_idx.iter().zip(&groups).enumerate() {
                let pc = current[c];
                for (j, &nb) in group.iter().enumerate() {
                    let p = current[nb];
                    let row = rel.row_mut(g * k + j);
                    row[0] = p[0] - pc[0];
                    row[1] = p[1] - pc[1];
                    row[2] = p[2] - pc[2];
                    neighbor_idx.push(nb as u32);
                }
            }
            let next: Vec<[F; 3]> = centroid_idx.iter().map(|&c| current[c]).collect();
            local.push(LocalLevelPlan {
                m_prev: current.len(),
                n_centroids: m,
                k,
                neighbor_idx,
                rel,
            });
            current = next;
        }
        let mut global_coords = Mat::zeros(current.len(), 3);
        for (r, p) in current.iter().enumerate() {
            global_coords.row_mut(r).copy_from_slice(p);
        }
        Ok(GroupingPlan {
            local,
            global_coords,
        })
    }
}

/// One SA level's trainable part: the shared MLP.
#[derive(Debug, Clone)]
pub struct SaBlock<F> {
    pub spec: SaLayerSpec,
    pub mlp: MlpChain<F>,
}

struct SaTrace<F> {
    cache: MlpChainCache<F>,
    argmax: Vec<u32>,
    in_rows: usize,
}

/// Forward caches of one training step (encoder side).
pub struct EncodeTrace<F> {
    sa: Vec<SaTrace<F>>,
    head_cache: MlpChainCache<F>,
    batch: usize,
}

/// Forward caches of one training step (receiver side).
pub struct DecodeTrace<F> {
    rec_cache: MlpChainCache<F>,
    cls_cache: MlpChainCache<F>,
}

/// All trainable parameters and running statistics of transmitter and
/// receiver, plus the architecture they belong to.
#[derive(Debug, Clone)]
pub struct Model<F> {
    pub cfg: ModelConfig,
    pub sa: Vec<SaBlock<F>>,
    pub head_hidden: MlpChain<F>,
    pub head_out: Affine<F>,
    pub rec_hidden: MlpChain<F>,
    pub rec_out: Affine<F>,
    pub cls_hidden: MlpChain<F>,
    pub cls_out: Affine<F>,
}

impl<F: Scalar> Model<F> {
    /// Builds and initializes a model; parameter draws are a deterministic
    /// function of `seed` and the declaration order.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut sa = Vec::new();
        let mut in_dim = 3usize; // relative coordinates only at level 0
        for (l, spec) in cfg.encoder.sa_layers.iter().enumerate() {
            let mut widths = vec![in_dim];
            widths.extend_from_slice(&spec.mlp_widths);
            sa.push(SaBlock {
                spec: spec.clone(),
                mlp: MlpChain::new(&format!("encoder.sa{l}"), &widths),
            });
            in_dim = 3 + *spec.mlp_widths.last().unwrap();
        }
        let global_out = *cfg
            .encoder
            .sa_layers
            .last()
            .unwrap()
            .mlp_widths
            .last()
            .unwrap();

        let d = cfg.latent_dim();
        let mut head_widths = vec![global_out];
        head_widths.extend_from_slice(&cfg.encoder.head_widths[..cfg.encoder.head_widths.len() - 1]);
        let head_hidden = MlpChain::new("encoder.head", &head_widths);
        let head_out = Affine::new("encoder.head.out", *head_widths.last().unwrap(), d);

        let mut rec_widths = vec![d];
        rec_widths.extend_from_slice(&cfg.rec_hidden);
        let rec_hidden = MlpChain::new("recon", &rec_widths);
        let rec_out = Affine::new(
            "recon.out",
            *rec_widths.last().unwrap(),
            cfg.n_points() * 3,
        );

        let mut cls_widths = vec![d];
        cls_widths.extend_from_slice(&cfg.cls_hidden);
        let cls_hidden = MlpChain::new("classifier", &cls_widths);
        let cls_out = Affine::new("classifier.out", *cls_widths.last().unwrap(), cfg.n_classes);

        let mut model = Model {
            cfg,
            sa,
            head_hidden,
            head_out,
            rec_hidden,
            rec_out,
            cls_hidden,
            cls_out,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for block in &mut model.sa {
            block.mlp.init_uniform(&mut rng);
        }
        model.head_hidden.init_uniform(&mut rng);
        model.head_out.init_uniform(&mut rng);
        model.rec_hidden.init_uniform(&mut rng);
        model.rec_out.init_uniform(&mut rng);
        model.cls_hidden.init_uniform(&mut rng);
        model.cls_out.init_uniform(&mut rng);
        Ok(model)
    }

    pub fn latent_dim(&self) -> usize {
        self.cfg.latent_dim()
    }

    /// Visits every trainable tensor in declaration (checkpoint) order.
    pub fn for_each_param(&mut self, f: &mut impl FnMut(&mut ParamTensor<F>)) {
        for block in &mut self.sa {
            block.mlp.for_each_param(f);
        }
        self.head_hidden.for_each_param(f);
        self.head_out.for_each_param(f);
        self.rec_hidden.for_each_param(f);
        self.rec_out.for_each_param(f);
        self.cls_hidden.for_each_param(f);
        self.cls_out.for_each_param(f);
    }

    /// Visits every running-statistics buffer in declaration order.
    pub fn for_each_buffer(&mut self, f: &mut impl FnMut(&mut Buffer<F>)) {
        for block in &mut self.sa {
            block.mlp.for_each_buffer(f);
        }
        self.head_hidden.for_each_buffer(f);
        self.rec_hidden.for_each_buffer(f);
        self.cls_hidden.for_each_buffer(f);
    }

    pub fn zero_grads(&mut self) {
        self.for_each_param(&mut |p| p.zero_grad());
    }

    // ----- batched input assembly ---------------------------------------

    fn assemble_local_input(
        &self,
        plans: &[&GroupingPlan<F>],
        level: usize,
        feats: Option<&Mat<F>>,
    ) -> Mat<F> {
        let lp0 = &plans[0].local[level];
        let (m, k, m_prev) = (lp0.n_centroids, lp0.k, lp0.m_prev);
        let c_prev = feats.map_or(0, Mat::cols);
        let b = plans.len();
        let mut input = Mat::zeros(b * m * k, 3 + c_prev);
        for (s, plan) in plans.iter().enumerate() {
            let lp = &plan.local[level];
            for r in 0..m * k {
                let row = input.row_mut(s * m * k + r);
                row[..3].copy_from_slice(lp.rel.row(r));
                if let Some(feats) = feats {
                    let src = feats.row(s * m_prev + lp.neighbor_idx[r] as usize);
                    row[3..].copy_from_slice(src);
                }
            }
        }
        input
    }

    fn assemble_global_input(&self, plans: &[&GroupingPlan<F>], feats: &Mat<F>) -> Mat<F> {
        let m_prev = plans[0].global_coords.rows();
        let c_prev = feats.cols();
        let b = plans.len();
        let mut input = Mat::zeros(b * m_prev, 3 + c_prev);
        for (s, plan) in plans.iter().enumerate() {
            for r in 0..m_prev {
                let row = input.row_mut(s * m_prev + r);
                row[..3].copy_from_slice(plan.global_coords.row(r));
                row[3..].copy_from_slice(feats.row(s * m_prev + r));
            }
        }
        input
    }

    // ----- encoder -------------------------------------------------------

    /// Training-mode batched encode: returns the latent matrix `[B, D]` and
    /// the caches needed by [`Model::encoder_backward`].
    pub fn encode_train(
        &mut self,
        plans: &[&GroupingPlan<F>],
    ) -> Result<(Mat<F>, EncodeTrace<F>)> {
        assert!(!plans.is_empty());
        let b = plans.len();
        let mut sa_traces = Vec::with_capacity(self.sa.len());
        let mut feats: Option<Mat<F>> = None;
        let n_local = self.sa.len() - 1;
        for l in 0..n_local {
            let input = self.assemble_local_input(plans, l, feats.as_ref());
            let in_rows = input.rows();
            let cache = self.sa[l].mlp.forward_train(input);
            let k = plans[0].local[l].k;
            let (pooled, argmax) = max_pool_groups(cache.output(), k);
            sa_traces.push(SaTrace {
                cache,
                argmax,
                in_rows,
            });
            feats = Some(pooled);
        }
        let input = self.assemble_global_input(plans, feats.as_ref().unwrap());
        let in_rows = input.rows();
        let m_prev = plans[0].global_coords.rows();
        let cache = self.sa[n_local].mlp.forward_train(input);
        let (pooled, argmax) = max_pool_groups(cache.output(), m_prev);
        sa_traces.push(SaTrace {
            cache,
            argmax,
            in_rows,
        });

        let head_cache = self.head_hidden.forward_train(pooled);
        let z = self.head_out.forward(head_cache.output());
        debug_assert_eq!(z.rows(), b);
        Ok((
            z,
            EncodeTrace {
                sa: sa_traces,
                head_cache,
                batch: b,
            },
        ))
    }

    /// Inference-mode batched encode (running statistics, no caches).
    pub fn encode_eval(&self, plans: &[&GroupingPlan<F>]) -> Result<Mat<F>> {
        assert!(!plans.is_empty());
        let mut feats: Option<Mat<F>> = None;
        let n_local = self.sa.len() - 1;
        for l in 0..n_local {
            let input = self.assemble_local_input(plans, l, feats.as_ref());
            let out = self.sa[l].mlp.forward_eval(input);
            let (pooled, _) = max_pool_groups(&out, plans[0].local[l].k);
            feats = Some(pooled);
        }
        let input = self.assemble_global_input(plans, feats.as_ref().unwrap());
        let out = self.sa[n_local].mlp.forward_eval(input);
        let (pooled, _) = max_pool_groups(&out, plans[0].global_coords.rows());
        let h = self.head_hidden.forward_eval(pooled);
        Ok(self.head_out.forward(&h))
    }

    /// Single-cloud inference encode; builds the grouping plan internally.
    pub fn encode(&self, cloud: &FixedCloud<F>) -> Result<Vec<F>> {
        let plan = GroupingPlan::build(cloud.points(), &self.cfg.encoder)?;
        let z = self.encode_eval(&[&plan])?;
        Ok(z.into_data())
    }

    /// Backward through head and SA stack given `dL/dz`; accumulates
    /// parameter gradients.
    pub fn encoder_backward(
        &mut self,
        plans: &[&GroupingPlan<F>],
        trace: &EncodeTrace<F>,
        grad_z: &Mat<F>,
    ) -> Result<()> {
        let b = trace.batch;
        debug_assert_eq!(grad_z.rows(), b);

        let g = self.head_out.backward(trace.head_cache.output(), grad_z);
        let g = self.head_hidden.backward(&trace.head_cache, g);

        // Global level.
        let n_local = self.sa.len() - 1;
        let gt = &trace.sa[n_local];
        let g = max_pool_groups_backward(&g, &gt.argmax, gt.in_rows);
        let g = self.sa[n_local].mlp.backward(&gt.cache, g);
        // Strip the coordinate columns; rows map one-to-one to feature rows.
        let m_prev = plans[0].global_coords.rows();
        let c_prev = g.cols() - 3;
        let mut grad_feats = Mat::zeros(b * m_prev, c_prev);
        for r in 0..b * m_prev {
            grad_feats.row_mut(r).copy_from_slice(&g.row(r)[3..]);
        }

        // Local levels in reverse, scattering into the previous level.
        for l in (0..n_local).rev() {
            let st = &trace.sa[l];
            let g = max_pool_groups_backward(&grad_feats, &st.argmax, st.in_rows);
            let g = self.sa[l].mlp.backward(&st.cache, g);
            if l == 0 {
                break; // level 0 input is coordinates only
            }
            let lp0 = &plans[0].local[l];
            let (m, k, m_prev) = (lp0.n_centroids, lp0.k, lp0.m_prev);
            let c_prev = g.cols() - 3;
            let mut scattered = Mat::zeros(b * m_prev, c_prev);
            for (s, plan) in plans.iter().enumerate() {
                let lp = &plan.local[l];
                for r in 0..m * k {
                    let src = &g.row(s * m * k + r)[3..];
                    let dst = scattered.row_mut(s * m_prev + lp.neighbor_idx[r] as usize);
                    for (d, v) in dst.iter_mut().zip(src) {
                        *d += *v;
                    }
                }
            }
            grad_feats = scattered;
        }
        Ok(())
    }

    // ----- receiver ------------------------------------------------------

    /// Training-mode receiver forward: reconstruction rows `[B, N*3]` and
    /// classifier logits `[B, C]`.
    pub fn decode_train(&mut self, z: &Mat<F>) -> (Mat<F>, Mat<F>, DecodeTrace<F>) {
        let rec_cache = self.rec_hidden.forward_train(z.clone());
        let recon = self.rec_out.forward(rec_cache.output());
        let cls_cache = self.cls_hidden.forward_train(z.clone());
        let logits = self.cls_out.forward(cls_cache.output());
        (
            recon,
            logits,
            DecodeTrace {
                rec_cache,
                cls_cache,
            },
        )
    }

    /// Inference-mode receiver forward.
    pub fn decode_eval(&self, z: &Mat<F>) -> (Mat<F>, Mat<F>) {
        let rec_h = self.rec_hidden.forward_eval(z.clone());
        let recon = self.rec_out.forward(&rec_h);
        let cls_h = self.cls_hidden.forward_eval(z.clone());
        let logits = self.cls_out.forward(&cls_h);
        (recon, logits)
    }

    /// Accumulates receiver gradients; returns `dL/dz` (sum of both branches).
    pub fn decoders_backward(
        &mut self,
        trace: &DecodeTrace<F>,
        grad_recon: &Mat<F>,
        grad_logits: &Mat<F>,
    ) -> Mat<F> {
        let g = self.rec_out.backward(trace.rec_cache.output(), grad_recon);
        let mut dz = self.rec_hidden.backward(&trace.rec_cache, g);

        let g = self.cls_out.backward(trace.cls_cache.output(), grad_logits);
        let dz_cls = self.cls_hidden.backward(&trace.cls_cache, g);

        for (a, b) in dz.data_mut().iter_mut().zip(dz_cls.data()) {
            *a += *b;
        }
        dz
    }

    /// Reconstructs a cloud from one received latent vector.
    pub fn decode_geometry(&self, z: &[F]) -> Result<Vec<[F; 3]>> {
        self.check_latent(z)?;
        let zm = Mat::from_vec(1, z.len(), z.to_vec());
        let (recon, _) = self.decode_eval(&zm);
        Ok(reshape_points(recon.row(0)))
    }

    /// Class distribution from one received latent vector.
    pub fn decode_semantic(&self, z: &[F]) -> Result<Vec<F>> {
        self.check_latent(z)?;
        let zm = Mat::from_vec(1, z.len(), z.to_vec());
        let (_, logits) = self.decode_eval(&zm);
        Ok(softmax_rows(&logits).into_data())
    }

    fn check_latent(&self, z: &[F]) -> Result<()> {
        if z.len() != self.latent_dim() {
            return Err(Error::ShapeMismatch {
                context: "latent vector",
                expected: self.latent_dim(),
                actual: z.len(),
            });
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCoordinate);
        }
        Ok(())
    }
}

impl<F: Scalar> SaBlock<F> {
    /// Runs this level on a single point set in inference mode: FPS + kNN +
    /// shared MLP + per-group max pooling. `features` rows align with
    /// `points`. A global level pools over all points to a single vector.
    pub fn forward_points_eval(
        &self,
        points: &[[F; 3]],
        features: Option<&Mat<F>>,
        fps_start: FpsStartRule,
    ) -> Result<(Vec<[F; 3]>, Mat<F>)> {
        let c_prev = features.map_or(0, Mat::cols);
        if let Some(f) = features {
            if f.rows() != points.len() {
                return Err(Error::ShapeMismatch {
                    context: "sa features",
                    expected: points.len(),
                    actual: f.rows(),
                });
            }
        }
        let expected_in = self.mlp.layers[0].affine.in_dim();
        if 3 + c_prev != expected_in {
            return Err(Error::ShapeMismatch {
                context: "sa input width",
                expected: expected_in,
                actual: 3 + c_prev,
            });
        }

        if self.spec.is_global() {
            let m = points.len();
            let mut input = Mat::zeros(m, 3 + c_prev);
            for (r, p) in points.iter().enumerate() {
                let row = input.row_mut(r);
                row[..3].copy_from_slice(p);
                if let Some(f) = features {
                    row[3..].copy_from_slice(f.row(r));
                }
            }
            let out = self.mlp.forward_eval(input);
            let (pooled, _) = max_pool_groups(&out, m);
            return Ok((vec![geometry::centroid_of(points)], pooled));
        }

        let centroid_idx = geometry::farthest_point_sample(points, self.spec.n_centroids, fps_start)?;
        let groups = geometry::knn_group(points, &centroid_idx, self.spec.k_neighbors)?;
        let (m, k) = (self.spec.n_centroids, self.spec.k_neighbors);
        let mut input = Mat::zeros(m * k, 3 + c_prev);
        for (g, (&c, group)) in centroid_idx.iter().zip(&groups).enumerate() {
            let pc = points[c];
            for (j, &nb) in group.iter().enumerate() {
                let row = input.row_mut(g * k + j);
                row[0] = points[nb][0] - pc[0];
                row[1] = points[nb][1] - pc[1];
                row[2] = points[nb][2] - pc[2];
                if let Some(f) = features {
                    row[3..].copy_from_slice(f.row(nb));
                }
            }
        }
        let out = self.mlp.forward_eval(input);
        let (pooled, _) = max_pool_groups(&out, k);
        let centroids = centroid_idx.iter().map(|&c| points[c]).collect();
        Ok((centroids, pooled))
    }
}

/// Interprets a flat reconstruction row as points: point `i` is
/// `(row[3i], row[3i+1], row[3i+2])`.
pub fn reshape_points<F: Scalar>(row: &[F]) -> Vec<[F; 3]> {
    debug_assert_eq!(row.len() % 3, 0);
    row.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::normalize;
    use alloc::collections::BTreeMap;
    use alloc::string::String;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(rng: &mut ChaCha8Rng, m: usize) -> Vec<[f64; 3]> {
        (0..m)
            .map(|_| {
                [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ]
            })
            .collect()
    }

    fn normalized_cloud(rng: &mut ChaCha8Rng, m: usize) -> FixedCloud<f64> {
        normalize(&random_cloud(rng, m)).unwrap()
    }

    fn params_by_name(model: &Model<f64>) -> BTreeMap<String, Vec<f64>> {
        let mut map = BTreeMap::new();
        let mut m = model.clone();
        m.for_each_param(&mut |p| {
            map.insert(p.name.clone(), p.value.clone());
        });
        map
    }

    /// Straight-line re-implementation of an eval-mode hidden layer for the
    /// loop oracle: affine, running-stats standardization, ReLU.
    fn oracle_hidden(
        params: &BTreeMap<String, Vec<f64>>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        x: &[f64],
    ) -> Vec<f64> {
        let w = &params[&format!("{name}.w")];
        let b = &params[&format!("{name}.b")];
        let gamma = &params[&format!("{name}.gamma")];
        let beta = &params[&format!("{name}.beta")];
        // Fresh model: running mean 0, running var 1.
        let mut out = vec![0.0; out_dim];
        for o in 0..out_dim {
            let mut acc = b[o];
            for i in 0..in_dim {
                acc += x[i] * w[i * out_dim + o];
            }
            let bn = gamma[o] * (acc - 0.0) / (1.0f64 + 1e-5).sqrt() + beta[o];
            out[o] = bn.max(0.0);
        }
        out
    }

    fn oracle_affine(
        params: &BTreeMap<String, Vec<f64>>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        x: &[f64],
    ) -> Vec<f64> {
        let w = &params[&format!("{name}.w")];
        let b = &params[&format!("{name}.b")];
        (0..out_dim)
            .map(|o| {
                let mut acc = b[o];
                for i in 0..in_dim {
                    acc += x[i] * w[i * out_dim + o];
                }
                acc
            })
            .collect()
    }

    /// Independent per-centroid recomputation of the miniature encoder on a
    /// freshly initialized model (running stats still at their defaults).
    fn oracle_encode(model: &Model<f64>, cloud: &FixedCloud<f64>) -> Vec<f64> {
        let params = params_by_name(model);
        let cfg = &model.cfg.encoder;
        let mut points: Vec<[f64; 3]> = cloud.points().to_vec();
        let mut feats: Vec<Vec<f64>> = Vec::new();

        for (l, spec) in cfg.sa_layers.iter().enumerate() {
            let widths = {
                let mut w = vec![if l == 0 { 3 } else { 3 + feats[0].len() }];
                w.extend_from_slice(&spec.mlp_widths);
                w
            };
            if spec.is_global() {
                let mut per_point: Vec<Vec<f64>> = Vec::new();
                for (r, p) in points.iter().enumerate() {
                    let mut x: Vec<f64> = p.to_vec();
                    x.extend_from_slice(&feats[r]);
                    for (i, pair) in widths.windows(2).enumerate() {
                        x = oracle_hidden(
                            &params,
                            &format!("encoder.sa{l}.{i}"),
                            pair[0],
                            pair[1],
                            &x,
                        );
                    }
                    per_point.push(x);
                }
                let dim = per_point[0].len();
                let mut pooled = vec![f64::NEG_INFINITY; dim];
                for row in &per_point {
                    for c in 0..dim {
                        pooled[c] = pooled[c].max(row[c]);
                    }
                }
                feats = vec![pooled];
                points = vec![geometry::centroid_of(&points)];
            } else {
                let centroid_idx =
                    geometry::farthest_point_sample(&points, spec.n_centroids, cfg.fps_start)
                        .unwrap();
                let groups =
                    geometry::knn_group(&points, &centroid_idx, spec.k_neighbors).unwrap();
                let mut new_feats = Vec::new();
                for (&c, group) in centroid_idx.iter().zip(&groups) {
                    let mut pooled: Option<Vec<f64>> = None;
                    for &nb in group {
                        let mut x = vec![
                            points[nb][0] - points[c][0],
                            points[nb][1] - points[c][1],
                            points[nb][2] - points[c][2],
                        ];
                        if l > 0 {
                            x.extend_from_slice(&feats[nb]);
                        }
                        for (i, pair) in widths.windows(2).enumerate() {
                            x = oracle_hidden(
                                &params,
                                &format!("encoder.sa{l}.{i}"),
                                pair[0],
                                pair[1],
                                &x,
                            );
                        }
                        pooled = Some(match pooled {
                            None => x,
                            Some(mut acc) => {
                                for (a, v) in acc.iter_mut().zip(&x) {
                                    *a = a.max(*v);
                                }
                                acc
                            }
                        });
                    }
                    new_feats.push(pooled.unwrap());
                }
                points = centroid_idx.iter().map(|&c| points[c]).collect();
                feats = new_feats;
            }
        }

        // Head: hidden chain then linear output.
        let mut x = feats.pop().unwrap();
        let mut in_dim = x.len();
        for (i, w) in cfg.head_widths[..cfg.head_widths.len() - 1].iter().enumerate() {
            x = oracle_hidden(&params, &format!("encoder.head.{i}"), in_dim, *w, &x);
            in_dim = *w;
        }
        oracle_affine(&params, "encoder.head.out", in_dim, cfg.latent_dim(), &x)
    }

    #[test]
    fn encode_matches_loop_oracle_on_miniature_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let model = Model::<f64>::new(ModelConfig::miniature(), 7).unwrap();
        for _ in 0..10 {
            let cloud = normalized_cloud(&mut rng, 8);
            let got = model.encode(&cloud).unwrap();
            let want = oracle_encode(&model, &cloud);
            assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                let rel = (g - w).abs() / w.abs().max(1e-9);
                assert!(rel <= 1e-9, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn decoders_match_loop_oracle_on_miniature_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let model = Model::<f64>::new(ModelConfig::miniature(), 8).unwrap();
        let params = params_by_name(&model);
        for _ in 0..10 {
            let z: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();

            let got = model.decode_geometry(&z).unwrap();
            let mut x = z.clone();
            let mut in_dim = 4;
            for (i, w) in model.cfg.rec_hidden.iter().enumerate() {
                x = oracle_hidden(&params, &format!("recon.{i}"), in_dim, *w, &x);
                in_dim = *w;
            }
            let flat = oracle_affine(&params, "recon.out", in_dim, 24, &x);
            for (p, w) in got.iter().flatten().zip(&flat) {
                assert!((p - w).abs() <= 1e-9 * w.abs().max(1.0));
            }

            let got = model.decode_semantic(&z).unwrap();
            let mut x = z.clone();
            let mut in_dim = 4;
            for (i, w) in model.cfg.cls_hidden.iter().enumerate() {
                x = oracle_hidden(&params, &format!("classifier.{i}"), in_dim, *w, &x);
                in_dim = *w;
            }
            let logits = oracle_affine(&params, "classifier.out", in_dim, 2, &x);
            let mx = logits[0].max(logits[1]);
            let e: Vec<f64> = logits.iter().map(|v| (v - mx).exp()).collect();
            let sum: f64 = e.iter().sum();
            for (g, w) in got.iter().zip(&e) {
                assert!((g - w / sum).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn sa_layer_k1_group_is_the_mlp_output() {
        // With k=1 every group is just the centroid itself; pooling over one
        // element must return the MLP output of the zero offset.
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let block = SaBlock {
            spec: SaLayerSpec::local(3, 1, &[5]),
            mlp: {
                let mut m = MlpChain::<f64>::new("t", &[3, 5]);
                m.init_uniform(&mut rng);
                m
            },
        };
        let pts = random_cloud(&mut rng, 6);
        let (centroids, feats) = block
            .forward_points_eval(&pts, None, FpsStartRule::MaxCentroidDist)
            .unwrap();
        assert_eq!(centroids.len(), 3);
        // All rows equal the MLP image of the origin offset.
        let zero_in = Mat::zeros(1, 3);
        let expect = block.mlp.forward_eval(zero_in);
        for r in 0..3 {
            for c in 0..5 {
                assert!((feats.row(r)[c] - expect.row(0)[c]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn sa_layer_matches_direct_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let block = SaBlock {
            spec: SaLayerSpec::local(4, 2, &[6, 5]),
            mlp: {
                let mut m = MlpChain::<f64>::new("sa", &[3, 6, 5]);
                m.init_uniform(&mut rng);
                m
            },
        };
        let pts = random_cloud(&mut rng, 8);
        let (centroids, feats) = block
            .forward_points_eval(&pts, None, FpsStartRule::IndexZero)
            .unwrap();

        let centroid_idx = geometry::farthest_point_sample(&pts, 4, FpsStartRule::IndexZero).unwrap();
        let groups = geometry::knn_group(&pts, &centroid_idx, 2).unwrap();
        for (g, (&c, group)) in centroid_idx.iter().zip(&groups).enumerate() {
            assert_eq!(centroids[g], pts[c]);
            let mut pooled = vec![f64::NEG_INFINITY; 5];
            for &nb in group {
                let offset = Mat::from_vec(
                    1,
                    3,
                    vec![
                        pts[nb][0] - pts[c][0],
                        pts[nb][1] - pts[c][1],
                        pts[nb][2] - pts[c][2],
                    ],
                );
                let out = block.mlp.forward_eval(offset);
                for (p, v) in pooled.iter_mut().zip(out.row(0)) {
                    *p = p.max(*v);
                }
            }
            for c2 in 0..5 {
                assert!((feats.row(g)[c2] - pooled[c2]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn global_sa_layer_ignores_duplicated_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let block = SaBlock {
            spec: SaLayerSpec::global(&[7]),
            mlp: {
                let mut m = MlpChain::<f64>::new("g", &[3, 7]);
                m.init_uniform(&mut rng);
                m
            },
        };
        let pts = random_cloud(&mut rng, 9);
        let (_, out) = block
            .forward_points_eval(&pts, None, FpsStartRule::MaxCentroidDist)
            .unwrap();

        let mut dup = pts.clone();
        dup.push(pts[4]);
        let (_, out_dup) = block
            .forward_points_eval(&dup, None, FpsStartRule::MaxCentroidDist)
            .unwrap();
        assert_eq!(out, out_dup);
    }

    #[test]
    fn encoder_is_permutation_invariant_in_eval_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let model = Model::<f64>::new(ModelConfig::miniature(), 11).unwrap();
        for _ in 0..20 {
            let cloud = normalized_cloud(&mut rng, 8);
            let z = model.encode(&cloud).unwrap();

            let mut perm: Vec<usize> = (0..8).collect();
            for i in (1..8).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            let permuted = FixedCloud::from_parts(
                perm.iter().map(|&i| cloud.points()[i]).collect(),
                cloud.centroid(),
                cloud.scale(),
            );
            let zp = model.encode(&permuted).unwrap();
            for (a, b) in z.iter().zip(&zp) {
                assert!((a - b).abs() <= 1e-5, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn zeroed_geometry_decoder_emits_all_zero_cloud() {
        let mut model = Model::<f64>::new(ModelConfig::miniature(), 12).unwrap();
        model.rec_hidden.for_each_param(&mut |p| {
            if !p.name.ends_with(".gamma") {
                for v in &mut p.value {
                    *v = 0.0;
                }
            }
        });
        model.rec_out.for_each_param(&mut |p| {
            for v in &mut p.value {
                *v = 0.0;
            }
        });
        let out = model.decode_geometry(&[0.3, -0.5, 0.7, 0.1]).unwrap();
        assert_eq!(out.len(), 8);
        assert!(out.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn zeroed_classifier_head_gives_uniform_distribution() {
        let mut model = Model::<f64>::new(ModelConfig::miniature(), 13).unwrap();
        model.cls_out.for_each_param(&mut |p| {
            for v in &mut p.value {
                *v = 0.0;
            }
        });
        let probs = model.decode_semantic(&[0.3, -0.5, 0.7, 0.1]).unwrap();
        assert_eq!(probs.len(), 2);
        for p in probs {
            assert!((p - 0.5).abs() <= 1e-12);
        }
    }

    #[test]
    fn standard_config_produces_requested_latent_dims() {
        for d in [64usize, 256] {
            let cfg = ModelConfig::standard(d, 6);
            assert_eq!(cfg.latent_dim(), d);
            assert_eq!(cfg.n_points(), 2048);
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn encode_rejects_wrong_point_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let model = Model::<f64>::new(ModelConfig::miniature(), 14).unwrap();
        let cloud = normalized_cloud(&mut rng, 9);
        assert!(matches!(
            model.encode(&cloud),
            Err(Error::WrongPointCount { expected: 8, actual: 9 })
        ));
    }

    #[test]
    fn train_and_eval_paths_agree_per_row_up_to_batch_statistics() {
        // Not an equality test: train mode uses batch stats. This checks the
        // batched train forward runs and has the right shapes.
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        let mut model = Model::<f64>::new(ModelConfig::miniature(), 15).unwrap();
        let clouds: Vec<FixedCloud<f64>> = (0..3).map(|_| normalized_cloud(&mut rng, 8)).collect();
        let plans: Vec<GroupingPlan<f64>> = clouds
            .iter()
            .map(|c| GroupingPlan::build(c.points(), &model.cfg.encoder).unwrap())
            .collect();
        let plan_refs: Vec<&GroupingPlan<f64>> = plans.iter().collect();
        let (z, _) = model.encode_train(&plan_refs).unwrap();
        assert_eq!(z.rows(), 3);
        assert_eq!(z.cols(), 4);
        let (recon, logits, _) = model.decode_train(&z);
        assert_eq!(recon.rows(), 3);
        assert_eq!(recon.cols(), 24);
        assert_eq!(logits.cols(), 2);
    }
}
