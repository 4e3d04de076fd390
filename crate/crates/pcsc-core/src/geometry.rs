//! Pure geometric kernels on point sets.
//!
//! All functions are deterministic: nearest-neighbor and sampling ties break
//! toward the lowest point index, sums run in point-index order, and the only
//! randomness comes through explicit seeds.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;
use crate::{Error, Result};

/// Squared Euclidean distance between two points.
#[inline]
pub fn dist2<F: Scalar>(a: &[F; 3], b: &[F; 3]) -> F {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Mean of a non-empty point slice, accumulated in index order.
pub fn centroid_of<F: Scalar>(points: &[[F; 3]]) -> [F; 3] {
    let mut c = [F::zero(); 3];
    for p in points {
        c[0] += p[0];
        c[1] += p[1];
        c[2] += p[2];
    }
    let inv = F::one() / F::from_usize(points.len());
    [c[0] * inv, c[1] * inv, c[2] * inv]
}

fn validate_cloud<F: Scalar>(points: &[[F; 3]]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    for p in points {
        if !(p[0].is_finite() && p[1].is_finite() && p[2].is_finite()) {
            return Err(Error::NonFiniteCoordinate);
        }
    }
    Ok(())
}

/// An unordered set of 3D points with validated invariants: non-empty and
/// all coordinates finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet<F> {
    points: Vec<[F; 3]>,
}

impl<F: Scalar> PointSet<F> {
    pub fn new(points: Vec<[F; 3]>) -> Result<Self> {
        validate_cloud(&points)?;
        Ok(PointSet { points })
    }

    #[inline]
    pub fn points(&self) -> &[[F; 3]] {
        &self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false // non-empty by construction
    }

    pub fn into_points(self) -> Vec<[F; 3]> {
        self.points
    }
}

/// Fixed-size cloud after preprocessing, together with the normalization
/// record that maps it back to the raw sensor frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedCloud<F> {
    points: Vec<[F; 3]>,
    centroid: [F; 3],
    scale: F,
}

impl<F: Scalar> FixedCloud<F> {
    #[inline]
    pub fn points(&self) -> &[[F; 3]] {
        &self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Centroid subtracted during normalization (raw frame).
    #[inline]
    pub fn centroid(&self) -> [F; 3] {
        self.centroid
    }

    /// Max point norm divided out during normalization (raw frame).
    #[inline]
    pub fn scale(&self) -> F {
        self.scale
    }

    /// Reassembles a cloud from already-normalized points and a record taken
    /// from elsewhere. Used by checkpoint/dataset loaders.
    pub fn from_parts(points: Vec<[F; 3]>, centroid: [F; 3], scale: F) -> Self {
        FixedCloud {
            points,
            centroid,
            scale,
        }
    }

    /// Inverse of [`normalize`]: maps the points back to the raw frame.
    pub fn denormalize(&self) -> Vec<[F; 3]> {
        self.points
            .iter()
            .map(|p| {
                [
                    p[0] * self.scale + self.centroid[0],
                    p[1] * self.scale + self.centroid[1],
                    p[2] * self.scale + self.centroid[2],
                ]
            })
            .collect()
    }
}

/// Which normalization the Chamfer distance uses.
///
/// `Sum` adds the squared nearest-neighbor distances of both directions;
/// `Mean` divides each directed term by its set's cardinality, which keeps
/// the magnitude stable across point counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChamferForm {
    Sum,
    Mean,
}

/// Nearest-neighbor structure of a Chamfer evaluation, kept around so the
/// reconstruction loss can backpropagate through the matched pairs.
#[derive(Debug, Clone)]
pub struct ChamferMatches<F> {
    /// Σ over a of the squared distance to its nearest point in b.
    pub sum_ab: F,
    /// Σ over b of the squared distance to its nearest point in a.
    pub sum_ba: F,
    /// For each point of a, the index of its nearest neighbor in b.
    pub nn_ab: Vec<usize>,
    /// For each point of b, the index of its nearest neighbor in a.
    pub nn_ba: Vec<usize>,
}

impl<F: Scalar> ChamferMatches<F> {
    pub fn value(&self, form: ChamferForm) -> F {
        match form {
            ChamferForm::Sum => self.sum_ab + self.sum_ba,
            ChamferForm::Mean => {
                self.sum_ab / F::from_usize(self.nn_ab.len())
                    + self.sum_ba / F::from_usize(self.nn_ba.len())
            }
        }
    }
}

/// Lane count of the blocked nearest-neighbor scan; matches an AVX2 f32
/// register so the inner loop vectorizes.
const NN_LANES: usize = 8;

/// Brute-force directed nearest neighbors from every `from` point into `to`,
/// blocked into lanes for throughput. Ties break toward the lowest index:
/// each lane keeps the first minimum of its stride-`NN_LANES` subsequence,
/// and the cross-lane resolution picks the smallest index among lanes that
/// achieve the minimum.
fn directed_nn<F: Scalar>(from: &[[F; 3]], to: &[(F, F, F)]) -> (Vec<F>, Vec<usize>) {
    let n = to.len();
    let chunks = n / NN_LANES;
    let mut mins = Vec::with_capacity(from.len());
    let mut args = Vec::with_capacity(from.len());
    for p in from {
        let (px, py, pz) = (p[0], p[1], p[2]);
        let mut best = [F::infinity(); NN_LANES];
        let mut barg = [0u32; NN_LANES];
        for c in 0..chunks {
            let base = c * NN_LANES;
            let block = &to[base..base + NN_LANES];
            for (l, &(tx, ty, tz)) in block.iter().enumerate() {
                let dx = px - tx;
                let dy = py - ty;
                let dz = pz - tz;
                let d = dx * dx + dy * dy + dz * dz;
                if d < best[l] {
                    best[l] = d;
                    barg[l] = (base + l) as u32;
                }
            }
        }
        for (l, j) in (chunks * NN_LANES..n).enumerate() {
            let (tx, ty, tz) = to[j];
            let dx = px - tx;
            let dy = py - ty;
            let dz = pz - tz;
            let d = dx * dx + dy * dy + dz * dz;
            if d < best[l] {
                best[l] = d;
                barg[l] = j as u32;
            }
        }
        let mut m = best[0];
        for &v in &best[1..] {
            if v < m {
                m = v;
            }
        }
        let mut arg = u32::MAX;
        for l in 0..NN_LANES {
            if best[l] == m && barg[l] < arg {
                arg = barg[l];
            }
        }
        mins.push(m);
        args.push(arg as usize);
    }
    (mins, args)
}

/// Computes both directed nearest-neighbor terms of the Chamfer distance,
/// recording the matched indices.
pub fn chamfer_with_matches<F: Scalar>(
    a: &[[F; 3]],
    b: &[[F; 3]],
) -> Result<ChamferMatches<F>> {
    validate_cloud(a)?;
    validate_cloud(b)?;

    let a_soa: Vec<(F, F, F)> = a.iter().map(|p| (p[0], p[1], p[2])).collect();
    let b_soa: Vec<(F, F, F)> = b.iter().map(|p| (p[0], p[1], p[2])).collect();

    let (row_min, nn_ab) = directed_nn(a, &b_soa);
    let (col_min, nn_ba) = directed_nn(b, &a_soa);

    let mut sum_ab = F::zero();
    for d in &row_min {
        sum_ab += *d;
    }
    let mut sum_ba = F::zero();
    for d in &col_min {
        sum_ba += *d;
    }

    Ok(ChamferMatches {
        sum_ab,
        sum_ba,
        nn_ab,
        nn_ba,
    })
}

/// Chamfer distance between two point sets (squared-distance form).
pub fn chamfer_distance<F: Scalar>(
    a: &[[F; 3]],
    b: &[[F; 3]],
    form: ChamferForm,
) -> Result<F> {
    Ok(chamfer_with_matches(a, b)?.value(form))
}

/// How farthest point sampling picks its first point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FpsStartRule {
    /// Start from the point farthest from the cloud centroid. The selection
    /// then depends on the geometry only, not on point order.
    #[default]
    MaxCentroidDist,
    /// Start from index 0, matching the common reference implementations.
    IndexZero,
}

/// Greedy farthest point sampling; returns `k` indices in selection order.
///
/// Every step picks the point maximizing the minimum distance to the already
/// selected set; ties break toward the lowest index.
pub fn farthest_point_sample<F: Scalar>(
    points: &[[F; 3]],
    k: usize,
    start_rule: FpsStartRule,
) -> Result<Vec<usize>> {
    validate_cloud(points)?;
    if k == 0 {
        return Err(Error::InvalidConfig("farthest point sampling needs k >= 1"));
    }
    if k > points.len() {
        return Err(Error::CountExceedsPoints {
            requested: k,
            available: points.len(),
        });
    }

    let start = match start_rule {
        FpsStartRule::IndexZero => 0,
        FpsStartRule::MaxCentroidDist => {
            let c = centroid_of(points);
            let mut best = F::neg_infinity();
            let mut arg = 0usize;
            for (i, p) in points.iter().enumerate() {
                let d = dist2(p, &c);
                if d > best {
                    best = d;
                    arg = i;
                }
            }
            arg
        }
    };

    let mut selected = Vec::with_capacity(k);
    selected.push(start);

    let mut min_dist: Vec<F> = points.iter().map(|p| dist2(p, &points[start])).collect();
    for _ in 1..k {
        let mut best = F::neg_infinity();
        let mut arg = 0usize;
        for (i, d) in min_dist.iter().enumerate() {
            if *d > best {
                best = *d;
                arg = i;
            }
        }
        selected.push(arg);
        for (d, p) in min_dist.iter_mut().zip(points) {
            let nd = dist2(p, &points[arg]);
            if nd < *d {
                *d = nd;
            }
        }
    }
    Ok(selected)
}

/// For each centroid index, the `k` nearest points (the centroid itself
/// included), ordered by ascending distance with ties toward lower index.
pub fn knn_group<F: Scalar>(
    points: &[[F; 3]],
    centroids: &[usize],
    k: usize,
) -> Result<Vec<Vec<usize>>> {
    validate_cloud(points)?;
    if k == 0 {
        return Err(Error::InvalidConfig("knn grouping needs k >= 1"));
    }
    if k > points.len() {
        return Err(Error::CountExceedsPoints {
            requested: k,
            available: points.len(),
        });
    }
    for &c in centroids {
        assert!(c < points.len(), "centroid index out of range");
    }

    let mut groups = Vec::with_capacity(centroids.len());
    let mut scratch: Vec<(F, usize)> = Vec::with_capacity(points.len());
    for &c in centroids {
        scratch.clear();
        let pc = points[c];
        scratch.extend(
            points
                .iter()
                .enumerate()
                .map(|(j, p)| (dist2(&pc, p), j)),
        );
        scratch.sort_unstable_by(|x, y| {
            x.0.partial_cmp(&y.0)
                .expect("finite distances")
                .then(x.1.cmp(&y.1))
        });
        groups.push(scratch[..k].iter().map(|&(_, j)| j).collect());
    }
    Ok(groups)
}

/// Voxel-grid downsampling: one output point per occupied voxel, equal to
/// the centroid of the points falling in that voxel.
///
/// The voxel index of point `p` is `floor((p - min_corner) / cell)` per
/// component; output points come out in lexicographic voxel order.
pub fn voxel_downsample<F: Scalar>(points: &[[F; 3]], cell: F) -> Result<Vec<[F; 3]>> {
    validate_cloud(points)?;
    if !(cell > F::zero()) || !cell.is_finite() {
        return Err(Error::InvalidVoxelCell(cell.to_f64()));
    }

    let mut min_corner = points[0];
    for p in points {
        for c in 0..3 {
            if p[c] < min_corner[c] {
                min_corner[c] = p[c];
            }
        }
    }

    let mut cells: BTreeMap<[i64; 3], ([F; 3], usize)> = BTreeMap::new();
    for p in points {
        let key = [
            ((p[0] - min_corner[0]) / cell).floor().to_f64() as i64,
            ((p[1] - min_corner[1]) / cell).floor().to_f64() as i64,
            ((p[2] - min_corner[2]) / cell).floor().to_f64() as i64,
        ];
        let entry = cells.entry(key).or_insert(([F::zero(); 3], 0));
        entry.0[0] += p[0];
        entry.0[1] += p[1];
        entry.0[2] += p[2];
        entry.1 += 1;
    }

    Ok(cells
        .into_values()
        .map(|(sum, n)| {
            let inv = F::one() / F::from_usize(n);
            [sum[0] * inv, sum[1] * inv, sum[2] * inv]
        })
        .collect())
}

/// Resampling strategy for producing fixed-size clouds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResampleStrategy {
    /// Uniform point subsampling, preserving the original distribution.
    #[default]
    Random,
    /// Voxel-grid downsampling first, then random completion to size.
    Voxel,
}

/// Draws `n` indices from `0..m`: without replacement when `m >= n`,
/// i.i.d. uniform (with replacement) otherwise.
pub fn sample_indices<R: Rng>(rng: &mut R, m: usize, n: usize) -> Vec<usize> {
    if m >= n {
        rand::seq::index::sample(rng, m, n).into_vec()
    } else {
        (0..n).map(|_| rng.gen_range(0..m)).collect()
    }
}

/// Resamples a cloud to exactly `n` points. Deterministic for a fixed seed.
///
/// `cell` is only used by the voxel strategy.
pub fn resample_fixed<F: Scalar>(
    points: &[[F; 3]],
    n: usize,
    strategy: ResampleStrategy,
    seed: u64,
    cell: F,
) -> Result<Vec<[F; 3]>> {
    validate_cloud(points)?;
    if n == 0 {
        return Err(Error::InvalidConfig("resampling needs n >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |src: &[[F; 3]], rng: &mut ChaCha8Rng| -> Vec<[F; 3]> {
        sample_indices(rng, src.len(), n)
            .into_iter()
            .map(|i| src[i])
            .collect()
    };
    match strategy {
        ResampleStrategy::Random => Ok(pick(points, &mut rng)),
        ResampleStrategy::Voxel => {
            let vox = voxel_downsample(points, cell)?;
            Ok(pick(&vox, &mut rng))
        }
    }
}

/// Centers a cloud on its centroid and scales it so the farthest point has
/// unit norm; records the transform so it can be inverted exactly.
pub fn normalize<F: Scalar>(points: &[[F; 3]]) -> Result<FixedCloud<F>> {
    validate_cloud(points)?;
    let centroid = centroid_of(points);
    let centered: Vec<[F; 3]> = points
        .iter()
        .map(|p| [p[0] - centroid[0], p[1] - centroid[1], p[2] - centroid[2]])
        .collect();
    let mut max_d2 = F::zero();
    for p in &centered {
        let d2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        if d2 > max_d2 {
            max_d2 = d2;
        }
    }
    let scale = max_d2.sqrt();
    if scale <= F::zero() {
        return Err(Error::DegenerateCloud);
    }
    let inv = F::one() / scale;
    Ok(FixedCloud {
        points: centered
            .into_iter()
            .map(|p| [p[0] * inv, p[1] * inv, p[2] * inv])
            .collect(),
        centroid,
        scale,
    })
}
