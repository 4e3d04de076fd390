//! Dataset generation and loading: scenes on disk as ASCII PLY, a
//! `manifest.csv` describing them, and an empty-workspace reference scan
//! (`reference.ply`) for background removal.
//!
//! Composition rule: `per_class` scenes for each of the 6 classes, half of
//! them with a welding clamp; the cylinder class alternates between its two
//! size variants. Everything is reproducible from the master seed.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pcsc_core::geometry::{PointSet, ResampleStrategy};
use pcsc_core::preprocess::{self, PreprocessConfig, ReferenceScan};
use pcsc_core::training::LabeledSample;

use crate::ply;
use crate::scene::{
    generate_scene, Pose, SceneSpec, ShapeKind, DESK_HALF, N_CLASSES,
};

/// Default nearest-neighbor threshold for background removal, meters.
pub const DEFAULT_TAU: f64 = 0.005;

/// Reference-scan sampling density (points per square meter). Dense enough
/// that every true desk point of a scene has a reference neighbor well
/// within the removal threshold.
const REFERENCE_DENSITY: f64 = 240_000.0;

/// One dataset entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    /// Path relative to the manifest directory.
    pub path: String,
    pub object_class: usize,
    pub clamp: bool,
    /// Per-scene generation seed.
    pub seed: u64,
}

/// Parsed `manifest.csv` plus the directory it lives in.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub rows: Vec<ManifestRow>,
    pub reference: PathBuf,
}

/// SplitMix64-style mixing for deriving independent sub-seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn scene_spec_for(row_class: usize, variant: bool, clamp: bool, rng: &mut ChaCha8Rng) -> SceneSpec {
    let shape = ShapeKind::for_class(row_class, variant);
    let margin = 0.14;
    let pose = Pose {
        yaw: rng.gen_range(0.0..std::f64::consts::TAU),
        x: rng.gen_range(-(DESK_HALF[0] - margin)..(DESK_HALF[0] - margin)),
        y: rng.gen_range(-(DESK_HALF[1] - margin)..(DESK_HALF[1] - margin)),
    };
    let clamp_pose = clamp.then(|| {
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let dist = rng.gen_range(0.08..0.13);
        Pose {
            yaw: rng.gen_range(0.0..std::f64::consts::TAU),
            x: (pose.x + dist * angle.cos()).clamp(-DESK_HALF[0] + 0.05, DESK_HALF[0] - 0.05),
            y: (pose.y + dist * angle.sin()).clamp(-DESK_HALF[1] + 0.05, DESK_HALF[1] - 0.05),
        }
    });
    SceneSpec {
        shape,
        pose,
        clamp_pose,
        sensor_sigma: 0.0005,
        dropout: 0.02,
        desk_density: rng.gen_range(24_000.0..32_000.0),
        object_density: 35_000.0,
    }
}

/// Generates the empty-workspace reference scan (desk only, dense).
pub fn generate_reference(seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, u64::MAX));
    let n = (4.0 * DESK_HALF[0] * DESK_HALF[1] * REFERENCE_DENSITY).round() as usize;
    let sigma = 0.0005;
    (0..n)
        .map(|_| {
            [
                rng.gen_range(-DESK_HALF[0]..DESK_HALF[0]),
                rng.gen_range(-DESK_HALF[1]..DESK_HALF[1]),
                sigma * rng.sample::<f64, _>(rand_distr::StandardNormal),
            ]
        })
        .collect()
}

fn to_f32(points: &[[f64; 3]]) -> Vec<[f32; 3]> {
    points
        .iter()
        .map(|p| [p[0] as f32, p[1] as f32, p[2] as f32])
        .collect()
}

/// Generates `per_class` scenes per class (half with clamps), writes the
/// PLY files, the reference scan, and `manifest.csv` into `out_dir`.
/// Byte-identical for identical seeds.
pub fn generate_dataset(per_class: usize, seed: u64, out_dir: &Path) -> Result<DatasetManifest> {
    anyhow::ensure!(per_class >= 1, "need at least one scene per class");
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating dataset directory {}", out_dir.display()))?;

    let reference = generate_reference(seed);
    let reference_path = out_dir.join("reference.ply");
    ply::write_cloud(&reference_path, &to_f32(&reference))
        .with_context(|| format!("writing {}", reference_path.display()))?;

    let mut rows = Vec::with_capacity(per_class * N_CLASSES);
    let clamp_count = per_class / 2;
    for class in 0..N_CLASSES {
        for i in 0..per_class {
            let scene_seed = mix_seed(seed, (class * per_class + i) as u64);
            let clamp = i >= per_class - clamp_count;
            let variant = i % 2 == 1;
            let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
            let spec = scene_spec_for(class, variant, clamp, &mut rng);
            let scene = generate_scene(&spec, &mut rng)
                .with_context(|| format!("generating scene class={class} index={i}"))?;

            let name = format!("{}_{i:03}.ply", crate::scene::CLASS_NAMES[class]);
            let path = out_dir.join(&name);
            ply::write_cloud(&path, &to_f32(&scene.points))
                .with_context(|| format!("writing {}", path.display()))?;
            rows.push(ManifestRow {
                path: name,
                object_class: class,
                clamp,
                seed: scene_seed,
            });
        }
    }

    let manifest = DatasetManifest {
        root: out_dir.to_path_buf(),
        rows,
        reference: reference_path,
    };
    write_manifest(&manifest)?;
    Ok(manifest)
}

/// Writes `manifest.csv` (`path,object_class,clamp,seed`).
pub fn write_manifest(manifest: &DatasetManifest) -> Result<()> {
    let mut text = String::from("path,object_class,clamp,seed\n");
    for row in &manifest.rows {
        text.push_str(&format!(
            "{},{},{},{}\n",
            row.path,
            row.object_class,
            u8::from(row.clamp),
            row.seed
        ));
    }
    let path = manifest.root.join("manifest.csv");
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Reads `manifest.csv` from a dataset directory and checks file existence.
pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join("manifest.csv");
    let text =
        fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("path,object_class,clamp,seed") => {}
        Some(other) => bail!("{}: unexpected manifest header '{other}'", path.display()),
        None => bail!("{}: empty manifest", path.display()),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            bail!("{}:{}: expected 4 fields", path.display(), i + 2);
        }
        let row = ManifestRow {
            path: fields[0].to_string(),
            object_class: fields[1]
                .parse()
                .with_context(|| format!("{}:{}: bad class", path.display(), i + 2))?,
            clamp: fields[2] == "1",
            seed: fields[3]
                .parse()
                .with_context(|| format!("{}:{}: bad seed", path.display(), i + 2))?,
        };
        if row.object_class >= N_CLASSES {
            bail!("{}:{}: class out of range", path.display(), i + 2);
        }
        if !dir.join(&row.path).exists() {
            bail!("{}: missing cloud file {}", path.display(), row.path);
        }
        rows.push(row);
    }
    let reference = dir.join("reference.ply");
    if !reference.exists() {
        bail!("{}: missing reference.ply", dir.display());
    }
    Ok(DatasetManifest {
        root: dir.to_path_buf(),
        rows,
        reference,
    })
}

/// Preprocessing choices shared by training and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessOptions {
    pub background_removal: bool,
    pub tau: f64,
    pub n_points: usize,
    pub strategy: ResampleStrategy,
    pub voxel_cell_rel: f64,
    /// Base seed; each sample derives its own resampling seed from it.
    pub seed: u64,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            background_removal: true,
            tau: DEFAULT_TAU,
            n_points: 2048,
            strategy: ResampleStrategy::Random,
            voxel_cell_rel: 0.02,
            seed: 0,
        }
    }
}

/// Loads every manifest row, runs the preprocessing pipeline, and returns
/// labeled samples in manifest order. Samples whose object is fully
/// suppressed by background removal are skipped (their indices returned
/// separately).
pub fn load_samples(
    manifest: &DatasetManifest,
    opts: &PreprocessOptions,
) -> Result<(Vec<LabeledSample<f32>>, Vec<usize>)> {
    let reference = if opts.background_removal {
        let pts = ply::read_cloud(&manifest.reference)
            .with_context(|| format!("reading {}", manifest.reference.display()))?;
        let set = PointSet::new(pts).context("reference scan invalid")?;
        Some(ReferenceScan::new(set, opts.tau as f32).context("reference scan invalid")?)
    } else {
        None
    };

    let mut samples = Vec::with_capacity(manifest.rows.len());
    let mut skipped = Vec::new();
    for (idx, row) in manifest.rows.iter().enumerate() {
        let path = manifest.root.join(&row.path);
        let pts =
            ply::read_cloud(&path).with_context(|| format!("reading {}", path.display()))?;
        let raw = PointSet::new(pts)
            .with_context(|| format!("{}: invalid point cloud", path.display()))?;
        let cfg = PreprocessConfig::<f32> {
            background_removal: opts.background_removal,
            tau: opts.tau as f32,
            n_points: opts.n_points,
            strategy: opts.strategy,
            voxel_cell_rel: opts.voxel_cell_rel as f32,
            seed: mix_seed(opts.seed, idx as u64),
        };
        match preprocess::preprocess(&raw, &cfg, reference.as_ref()) {
            Ok(cloud) => samples.push(LabeledSample {
                cloud,
                object_class: row.object_class,
                clamp_present: row.clamp,
            }),
            Err(pcsc_core::Error::BackgroundRemovedEverything) => skipped.push(idx),
            Err(e) => {
                return Err(e).with_context(|| format!("preprocessing {}", path.display()))
            }
        }
    }
    Ok((samples, skipped))
}

/// Labels of loaded samples, aligned with [`load_samples`] output.
pub fn kept_rows<'m>(
    manifest: &'m DatasetManifest,
    skipped: &[usize],
) -> Vec<&'m ManifestRow> {
    manifest
        .rows
        .iter()
        .enumerate()
        .filter(|(i, _)| !skipped.contains(i))
        .map(|(_, r)| r)
        .collect()
}
