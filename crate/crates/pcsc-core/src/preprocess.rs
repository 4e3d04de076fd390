//! Scene-to-input pipeline: optional background removal against a reference
//! scan of the empty workspace, then fixed-size resampling and normalization.
//!
//! Removal runs first, in raw sensor units; normalization statistics are
//! computed on the post-removal, post-resampling cloud.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::geometry::{self, FixedCloud, PointSet, ResampleStrategy};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Scan of the empty workspace plus the removal threshold.
#[derive(Debug, Clone)]
pub struct ReferenceScan<F> {
    points: Vec<[F; 3]>,
    tau: F,
}

impl<F: Scalar> ReferenceScan<F> {
    /// `tau` is the nearest-neighbor distance (raw units, e.g. meters) below
    /// which a scene point counts as background.
    pub fn new(points: PointSet<F>, tau: F) -> Result<Self> {
        if !(tau > F::zero()) || !tau.is_finite() {
            return Err(Error::InvalidConfig("removal threshold must be > 0"));
        }
        Ok(ReferenceScan {
            points: points.into_points(),
            tau,
        })
    }

    #[inline]
    pub fn points(&self) -> &[[F; 3]] {
        &self.points
    }

    #[inline]
    pub fn tau(&self) -> F {
        self.tau
    }
}

/// Configuration of the whole preprocessing pipeline.
#[derive(Debug, Clone)]
pub struct PreprocessConfig<F> {
    pub background_removal: bool,
    /// Removal threshold in raw units; only used when removal is enabled and
    /// overrides the reference scan's own threshold when set.
    pub tau: F,
    /// Output cloud size.
    pub n_points: usize,
    pub strategy: ResampleStrategy,
    /// Voxel cell size as a fraction of the cloud bounding-box diagonal.
    pub voxel_cell_rel: F,
    pub seed: u64,
}

impl<F: Scalar> Default for PreprocessConfig<F> {
    fn default() -> Self {
        PreprocessConfig {
            background_removal: false,
            tau: F::from_f64(0.005),
            n_points: 2048,
            strategy: ResampleStrategy::Random,
            voxel_cell_rel: F::from_f64(0.02),
            seed: 0,
        }
    }
}

/// Uniform hash grid for "is there a reference point within tau" queries.
///
/// Cell size equals tau, so checking the 3x3x3 neighborhood of a query cell
/// is exact for the threshold decision.
struct ThresholdGrid<'a, F> {
    cells: BTreeMap<[i64; 3], Vec<usize>>,
    points: &'a [[F; 3]],
    tau: F,
}

impl<'a, F: Scalar> ThresholdGrid<'a, F> {
    fn build(points: &'a [[F; 3]], tau: F) -> Self {
        let mut cells: BTreeMap<[i64; 3], Vec<usize>> = BTreeMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, tau)).or_default().push(i);
        }
        ThresholdGrid { cells, points, tau }
    }

    fn key(p: &[F; 3], tau: F) -> [i64; 3] {
        [
            (p[0] / tau).floor().to_f64() as i64,
            (p[1] / tau).floor().to_f64() as i64,
            (p[2] / tau).floor().to_f64() as i64,
        ]
    }

    fn has_point_within_tau(&self, q: &[F; 3]) -> bool {
        let k = Self::key(q, self.tau);
        let tau2 = self.tau * self.tau;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(idxs) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &i in idxs {
                            if geometry::dist2(q, &self.points[i]) <= tau2 {
                                return true;
                            }
                        }
                    }
                }
            }
        }
        false
    }
}

/// Keeps the scene points farther than `tau` from every reference point.
///
/// Raising [`Error::BackgroundRemovedEverything`] lets callers skip samples
/// where the object was fully suppressed.
pub fn remove_background<F: Scalar>(
    scene: &PointSet<F>,
    reference: &ReferenceScan<F>,
) -> Result<PointSet<F>> {
    let grid = ThresholdGrid::build(reference.points(), reference.tau());
    let kept: Vec<[F; 3]> = scene
        .points()
        .iter()
        .filter(|p| !grid.has_point_within_tau(p))
        .copied()
        .collect();
    if kept.is_empty() {
        return Err(Error::BackgroundRemovedEverything);
    }
    PointSet::new(kept)
}

/// Like [`remove_background`] but returns the surviving indices, for callers
/// that track per-point provenance.
pub fn background_mask<F: Scalar>(
    scene: &PointSet<F>,
    reference: &ReferenceScan<F>,
) -> Vec<usize> {
    let grid = ThresholdGrid::build(reference.points(), reference.tau());
    scene
        .points()
        .iter()
        .enumerate()
        .filter(|(_, p)| !grid.has_point_within_tau(p))
        .map(|(i, _)| i)
        .collect()
}

/// Absolute voxel cell for a cloud: `voxel_cell_rel` times the bounding-box
/// diagonal.
pub fn voxel_cell_for<F: Scalar>(points: &[[F; 3]], rel: F) -> F {
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        for c in 0..3 {
            if p[c] < lo[c] {
                lo[c] = p[c];
            }
            if p[c] > hi[c] {
                hi[c] = p[c];
            }
        }
    }
    let dx = hi[0] - lo[0];
    let dy = hi[1] - lo[1];
    let dz = hi[2] - lo[2];
    let diag = (dx * dx + dy * dy + dz * dz).sqrt();
    rel * diag
}

/// Full pipeline: optional background removal, resampling to `cfg.n_points`,
/// centroid/max-norm normalization. Deterministic per `cfg.seed`.
pub fn preprocess<F: Scalar>(
    raw: &PointSet<F>,
    cfg: &PreprocessConfig<F>,
    reference: Option<&ReferenceScan<F>>,
) -> Result<FixedCloud<F>> {
    if cfg.n_points == 0 {
        return Err(Error::InvalidConfig("preprocess needs n_points >= 1"));
    }
    let object_centric;
    let source: &PointSet<F> = if cfg.background_removal {
        let reference = reference.ok_or(Error::MissingReference)?;
        let scan = ReferenceScan::new(
            PointSet::new(reference.points().to_vec())?,
            cfg.tau,
        )?;
        object_centric = remove_background(raw, &scan)?;
        &object_centric
    } else {
        raw
    };

    let cell = voxel_cell_for(source.points(), cfg.voxel_cell_rel);
    // Degenerate bounding box: fall back to an arbitrary positive cell so the
    // voxel path still validates; normalization rejects the cloud later.
    let cell = if cell > F::zero() { cell } else { F::one() };
    let resampled =
        geometry::resample_fixed(source.points(), cfg.n_points, cfg.strategy, cfg.seed, cell)?;
    geometry::normalize(&resampled)
}
