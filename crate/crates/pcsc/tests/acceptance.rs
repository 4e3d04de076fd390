//! Acceptance suite: every gate the project must clear, one pass/fail line
//! per criterion.
//!
//! Fast criteria (oracles, gradient check, invariance, calibration) run
//! in-process on f64 kernels. Trend criteria train the full experiment grid
//! on a synthetic 360-sample dataset — expect the suite to run for tens of
//! minutes on a CPU. Set `PCSC_ACCEPTANCE_DIR` to keep (and reuse) the grid
//! artifacts between runs; delete that directory to force retraining.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pcsc_core::channel::{
    awgn, noise_variance, power_normalize_backward, power_normalize_train, PowerNormState,
};
use pcsc_core::eval::{Evaluator, MetricsRecord};
use pcsc_core::geometry::{
    chamfer_with_matches, dist2, farthest_point_sample, knn_group, normalize, voxel_downsample,
    FixedCloud, FpsStartRule,
};
use pcsc_core::mat::Mat;
use pcsc_core::model::{reshape_points, GroupingPlan, Model, ModelConfig};
use pcsc_core::nn::{cross_entropy, softmax_rows};
use pcsc_core::training::{composite_loss, LabeledSample, Task};

use pcsc::metrics::{read_metrics_csv, spearman};
use pcsc::runner::{self, SWEEP_SNRS};

/// Epochs per grid training run. A reduced schedule compared to the
/// full-length 50-epoch default: enough for every trend gate on the
/// synthetic dataset while keeping each run well inside the time budget.
const GRID_EPOCHS: usize = 12;
const GRID_SEED: u64 = 7;
const GRID_PER_CLASS: usize = 60;

struct Outcome {
    id: usize,
    name: &'static str,
    result: Result<String, String>,
}

fn record(results: &mut Vec<Outcome>, id: usize, name: &'static str, result: Result<String, String>) {
    results.push(Outcome { id, name, result });
}

// ---------------------------------------------------------------------------
// Criterion 1: geometry kernels against independent oracles.
// ---------------------------------------------------------------------------

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

fn criterion_oracles() -> Result<String, String> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);

    // Chamfer vs per-direction two-pass brute force.
    for i in 0..100 {
        let (na, nb) = (rng.gen_range(1..=64), rng.gen_range(1..=64));
        let a = random_cloud(&mut rng, na);
        let b = random_cloud(&mut rng, nb);
        let m = chamfer_with_matches(&a, &b).map_err(|e| e.to_string())?;
        let directed = |from: &[[f64; 3]], to: &[[f64; 3]]| -> f64 {
            from.iter()
                .map(|p| to.iter().map(|q| dist2(p, q)).fold(f64::INFINITY, f64::min))
                .sum()
        };
        let (oab, oba) = (directed(&a, &b), directed(&b, &a));
        if rel(m.sum_ab, oab) > 1e-9 || rel(m.sum_ba, oba) > 1e-9 {
            return Err(format!("chamfer oracle mismatch at instance {i}"));
        }
    }

    // kNN vs full sort.
    for i in 0..100 {
        let m = rng.gen_range(1..=48);
        let pts = random_cloud(&mut rng, m);
        let k = rng.gen_range(1..=m);
        let c = rng.gen_range(0..m);
        let got = knn_group(&pts, &[c], k).map_err(|e| e.to_string())?;
        let mut all: Vec<(f64, usize)> = pts
            .iter()
            .enumerate()
            .map(|(j, p)| (dist2(&pts[c], p), j))
            .collect();
        all.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));
        let expect: Vec<usize> = all[..k].iter().map(|&(_, j)| j).collect();
        if got[0] != expect {
            return Err(format!("knn oracle mismatch at instance {i}"));
        }
    }

    // Voxel downsampling vs hash-free quadratic recomputation.
    for i in 0..100 {
        let m = rng.gen_range(1..=64);
        let pts = random_cloud(&mut rng, m);
        let cell = rng.gen_range(0.05..0.8);
        let out = voxel_downsample(&pts, cell).map_err(|e| e.to_string())?;
        let mut min_corner = pts[0];
        for p in &pts {
            for c in 0..3 {
                min_corner[c] = min_corner[c].min(p[c]);
            }
        }
        let vox_of = |p: &[f64; 3]| -> [i64; 3] {
            [
                ((p[0] - min_corner[0]) / cell).floor() as i64,
                ((p[1] - min_corner[1]) / cell).floor() as i64,
                ((p[2] - min_corner[2]) / cell).floor() as i64,
            ]
        };
        for o in &out {
            let key = vox_of(o);
            let mut sum = [0.0f64; 3];
            let mut n = 0usize;
            for p in &pts {
                if vox_of(p) == key {
                    for c in 0..3 {
                        sum[c] += p[c];
                    }
                    n += 1;
                }
            }
            if n == 0 {
                return Err(format!("voxel output in empty cell at instance {i}"));
            }
            for c in 0..3 {
                if rel(o[c], sum[c] / n as f64) > 1e-9 && (o[c] - sum[c] / n as f64).abs() > 1e-12 {
                    return Err(format!("voxel centroid mismatch at instance {i}"));
                }
            }
        }
    }

    // FPS vs exhaustive greedy recomputation with an explicit distance table.
    for i in 0..100 {
        let m = rng.gen_range(1..=16);
        let pts = random_cloud(&mut rng, m);
        let k = rng.gen_range(1..=m);
        for start_rule in [FpsStartRule::IndexZero, FpsStartRule::MaxCentroidDist] {
            let got = farthest_point_sample(&pts, k, start_rule).map_err(|e| e.to_string())?;
            let start = match start_rule {
                FpsStartRule::IndexZero => 0,
                FpsStartRule::MaxCentroidDist => {
                    let c = pcsc_core::geometry::centroid_of(&pts);
                    let mut best = (f64::NEG_INFINITY, 0usize);
                    for (j, p) in pts.iter().enumerate() {
                        let d = dist2(p, &c);
                        if d > best.0 {
                            best = (d, j);
                        }
                    }
                    best.1
                }
            };
            let mut sel = vec![start];
            while sel.len() < k {
                let mut best = (f64::NEG_INFINITY, 0usize);
                for cand in 0..m {
                    let d = sel
                        .iter()
                        .map(|&s| dist2(&pts[cand], &pts[s]))
                        .fold(f64::INFINITY, f64::min);
                    if d > best.0 {
                        best = (d, cand);
                    }
                }
                sel.push(best.1);
            }
            if got != sel {
                return Err(format!("fps oracle mismatch at instance {i} ({start_rule:?})"));
            }
        }
    }

    let elapsed = started.elapsed();
    if elapsed.as_secs() > 60 {
        return Err(format!("oracle suite took {elapsed:?} (> 1 min)"));
    }
    Ok(format!("400 oracle instances in {elapsed:.2?}"))
}

// ---------------------------------------------------------------------------
// Criterion 2: analytic vs finite-difference gradients on the miniature model.
// ---------------------------------------------------------------------------

fn mini_samples(rng: &mut ChaCha8Rng) -> Vec<LabeledSample<f64>> {
    (0..2)
        .map(|i| LabeledSample {
            cloud: normalize(&random_cloud(rng, 8)).unwrap(),
            object_class: i % 2,
            clamp_present: i % 2 == 0,
        })
        .collect()
}

/// Batch-mean composite loss of the miniature model, channel bypassed,
/// recomputed from a fresh state (so running-statistic updates cannot leak).
fn mini_forward_loss(
    model: &Model<f64>,
    samples: &[LabeledSample<f64>],
    plans: &[GroupingPlan<f64>],
    lambda: f64,
) -> f64 {
    let mut model = model.clone();
    let mut state = PowerNormState::new(model.latent_dim());
    let plan_refs: Vec<&GroupingPlan<f64>> = plans.iter().collect();
    let (z, _) = model.encode_train(&plan_refs).unwrap();
    let (z_norm, _) = power_normalize_train(&z, &mut state).unwrap();
    let (recon, logits, _) = model.decode_train(&z_norm);
    let probs = softmax_rows(&logits);
    let mut total = 0.0;
    for (s, sample) in samples.iter().enumerate() {
        let xhat = reshape_points(recon.row(s));
        let l = composite_loss(
            sample.cloud.points(),
            &xhat,
            sample.object_class,
            probs.row(s),
            lambda,
        )
        .unwrap();
        total += l.total;
    }
    total / samples.len() as f64
}

fn criterion_gradient_check() -> Result<String, String> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let samples = mini_samples(&mut rng);
    let cfg = ModelConfig::miniature();
    let plans: Vec<GroupingPlan<f64>> = samples
        .iter()
        .map(|s| GroupingPlan::build(s.cloud.points(), &cfg.encoder).unwrap())
        .collect();
    let mut checked_total = 0usize;

    for lambda in [0.0f64, 1.0] {
        let base = Model::<f64>::new(cfg.clone(), 17).unwrap();

        // Analytic gradients through the full training backward path.
        let mut work = base.clone();
        let mut state = PowerNormState::new(work.latent_dim());
        let plan_refs: Vec<&GroupingPlan<f64>> = plans.iter().collect();
        work.zero_grads();
        let (z, enc_trace) = work.encode_train(&plan_refs).unwrap();
        let (z_norm, pn_cache) = power_normalize_train(&z, &mut state).unwrap();
        let (recon, logits, dec_trace) = work.decode_train(&z_norm);
        let probs = softmax_rows(&logits);
        let inv_b = 1.0 / samples.len() as f64;

        let mut grad_recon = Mat::zeros(recon.rows(), recon.cols());
        let mut grad_logits = Mat::zeros(logits.rows(), logits.cols());
        for (s, sample) in samples.iter().enumerate() {
            let x = sample.cloud.points();
            let xhat = reshape_points(recon.row(s));
            let matches = chamfer_with_matches(x, &xhat).unwrap();
            let g = grad_recon.row_mut(s);
            for (i, &j) in matches.nn_ab.iter().enumerate() {
                for c in 0..3 {
                    g[3 * j + c] += inv_b * 2.0 * (xhat[j][c] - x[i][c]);
                }
            }
            for (j, &i) in matches.nn_ba.iter().enumerate() {
                for c in 0..3 {
                    g[3 * j + c] += inv_b * 2.0 * (xhat[j][c] - x[i][c]);
                }
            }
            let gl = grad_logits.row_mut(s);
            for c in 0..gl.len() {
                let target = if c == sample.object_class { 1.0 } else { 0.0 };
                gl[c] = lambda * inv_b * (probs.row(s)[c] - target);
            }
            // The forward loss itself must be finite and consistent.
            let _ = cross_entropy(probs.row(s), sample.object_class);
        }
        let dz = work.decoders_backward(&dec_trace, &grad_recon, &grad_logits);
        let dz = power_normalize_backward(&pn_cache, &dz);
        work.encoder_backward(&plan_refs, &enc_trace, &dz).unwrap();

        let mut analytic: Vec<(String, Vec<f64>)> = Vec::new();
        work.for_each_param(&mut |p| analytic.push((p.name.clone(), p.grad.clone())));

        // Central differences with h = 1e-4 on every parameter.
        let h = 1e-4;
        let mut names: Vec<(String, usize)> = Vec::new();
        base.clone()
            .for_each_param(&mut |p| names.push((p.name.clone(), p.len())));
        for (name, len) in &names {
            for k in 0..*len {
                let perturbed = |delta: f64| {
                    let mut m = base.clone();
                    m.for_each_param(&mut |p| {
                        if &p.name == name {
                            p.value[k] += delta;
                        }
                    });
                    mini_forward_loss(&m, &samples, &plans, lambda)
                };
                let num = (perturbed(h) - perturbed(-h)) / (2.0 * h);
                let ana = analytic
                    .iter()
                    .find(|(n, _)| n == name)
                    .map(|(_, g)| g[k])
                    .unwrap();
                let denom = ana.abs().max(num.abs());
                // Gradients below FD noise are analytically zero (e.g. a
                // bias feeding a standardization layer).
                if denom > 1e-7 && (ana - num).abs() / denom > 1e-4 {
                    return Err(format!(
                        "lambda={lambda} {name}[{k}]: analytic {ana} vs numeric {num}"
                    ));
                }
                checked_total += 1;
            }
        }
    }

    let elapsed = started.elapsed();
    if elapsed.as_secs() > 60 {
        return Err(format!("gradient check took {elapsed:?} (> 1 min)"));
    }
    Ok(format!(
        "{checked_total} parameter entries within 1e-4, {elapsed:.2?}"
    ))
}

// ---------------------------------------------------------------------------
// Criterion 3: encoder permutation invariance at full scale.
// ---------------------------------------------------------------------------

fn criterion_permutation_invariance() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let model = Model::<f32>::new(ModelConfig::standard(256, 6), 5).unwrap();
    let mut worst = 0.0f32;
    for _ in 0..50 {
        let pts: Vec<[f32; 3]> = (0..2048)
            .map(|_| {
                [
                    rng.gen_range(-1.0f32..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ]
            })
            .collect();
        let cloud = normalize(&pts).unwrap();
        let z = model.encode(&cloud).unwrap();
        for _ in 0..5 {
            let mut perm: Vec<usize> = (0..2048).collect();
            for i in (1..2048).rev() {
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
                worst = worst.max((a - b).abs());
            }
        }
    }
    if worst <= 1e-5 {
        Ok(format!("max |dz| = {worst:.2e} over 250 permutations"))
    } else {
        Err(format!("max |dz| = {worst:.2e} exceeds 1e-5"))
    }
}

// ---------------------------------------------------------------------------
// Criterion 5: noise calibration.
// ---------------------------------------------------------------------------

fn criterion_noise_calibration() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    let mut worst = 0.0f64;
    for snr in SWEEP_SNRS {
        let z = Mat::<f64>::zeros(1000, 100);
        let noisy = awgn(&z, snr, &mut rng);
        let mut power = 0.0;
        for v in noisy.data() {
            power += v * v;
        }
        power /= 100_000.0;
        let expect = noise_variance(snr);
        let rel = (power - expect).abs() / expect;
        worst = worst.max(rel);
        if rel > 0.02 {
            return Err(format!(
                "snr {snr} dB: variance {power:.5} vs {expect:.5} (rel {rel:.4})"
            ));
        }
    }
    Ok(format!("worst relative error {worst:.4} over 7 SNRs"))
}

// ---------------------------------------------------------------------------
// Grid-backed criteria.
// ---------------------------------------------------------------------------

struct Grid {
    root: PathBuf,
    sweeps: Vec<Vec<MetricsRecord>>,
    baselines: Vec<MetricsRecord>,
    _hold: Option<tempfile::TempDir>,
}

fn grid_artifacts_present(root: &Path) -> bool {
    runner::GRID_RUN_NAMES
        .iter()
        .all(|name| {
            root.join(name).join("metrics.csv").exists()
                && root.join(name).join("baseline.csv").exists()
                && root.join(name).join("checkpoint.bin").exists()
        })
}

fn run_grid() -> anyhow::Result<Grid> {
    let (hold, root) = match std::env::var_os("PCSC_ACCEPTANCE_DIR") {
        Some(dir) => (None, PathBuf::from(dir)),
        None => {
            let t = tempfile::tempdir()?;
            let p = t.path().to_path_buf();
            (Some(t), p)
        }
    };
    if !grid_artifacts_present(&root) {
        runner::reproduce(&root, None, GRID_PER_CLASS, GRID_EPOCHS, GRID_SEED, false)?;
    }
    let mut sweeps = Vec::new();
    let mut baselines = Vec::new();
    for name in runner::GRID_RUN_NAMES {
        sweeps.push(read_metrics_csv(&root.join(name).join("metrics.csv"))?);
        baselines.push(
            read_metrics_csv(&root.join(name).join("baseline.csv"))?
                .pop()
                .expect("baseline row"),
        );
    }
    Ok(Grid {
        root,
        sweeps,
        baselines,
        _hold: hold,
    })
}

fn criterion_power_constraint(grid: &Grid) -> Result<String, String> {
    // Train mode: exact batch power.
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let mut state = PowerNormState::<f64>::new(256);
    for _ in 0..5 {
        let z = Mat::from_vec(
            16,
            256,
            (0..16 * 256)
                .map(|_| 1.5 + rng.gen_range(-2.0..2.0))
                .collect(),
        );
        let (out, _) = power_normalize_train(&z, &mut state).map_err(|e| e.to_string())?;
        let mut power = 0.0;
        for v in out.data() {
            power += v * v;
        }
        power /= 16.0 * 256.0;
        if (power - 1.0).abs() > 1e-5 {
            return Err(format!("train-mode batch power {power} deviates from 1"));
        }
    }

    // Eval mode: held-out latents of the trained D=256 model.
    let run = runner::load_run(&grid.root.join("d256_object_br")).map_err(|e| e.to_string())?;
    let test = runner::test_samples(&run, &grid.root.join("data")).map_err(|e| e.to_string())?;
    let evaluator = Evaluator::new(&run.model, &run.power_norm, &test, Task::Object, "fp")
        .map_err(|e| e.to_string())?;
    let p = evaluator.mean_power_per_dim();
    if !(0.9..=1.1).contains(&p) {
        return Err(format!("eval-mode power {p:.4} outside [0.9, 1.1]"));
    }
    Ok(format!("train power exact; eval power {p:.4}"))
}

fn chamfer_curve(records: &[MetricsRecord]) -> Vec<f64> {
    records.iter().map(|r| r.chamfer_mean).collect()
}

fn criterion_geometric_trend(grid: &Grid) -> Result<String, String> {
    let cm = chamfer_curve(&grid.sweeps[0]);
    let snrs: Vec<f64> = grid.sweeps[0].iter().map(|r| r.snr_db).collect();
    let rho = spearman(&cm, &snrs);
    if cm[0] <= cm[6] {
        return Err(format!("chamfer(-4dB) {} <= chamfer(8dB) {}", cm[0], cm[6]));
    }
    if rho > -0.8 {
        return Err(format!("spearman(chamfer, snr) = {rho:.3} > -0.8"));
    }
    Ok(format!(
        "chamfer -4dB/8dB = {:.2}, spearman = {rho:.3}",
        cm[0] / cm[6]
    ))
}

fn criterion_capacity_trend(grid: &Grid) -> Result<String, String> {
    let c256 = chamfer_curve(&grid.sweeps[0]);
    let c64 = chamfer_curve(&grid.sweeps[1]);
    let mean256 = c256.iter().sum::<f64>() / 7.0;
    let mean64 = c64.iter().sum::<f64>() / 7.0;
    let violations = c256.iter().zip(&c64).filter(|(a, b)| a > b).count();
    if mean256 > mean64 {
        return Err(format!("sweep-mean chamfer D=256 {mean256:.5} > D=64 {mean64:.5}"));
    }
    if violations > 2 {
        return Err(format!("{violations}/7 per-point violations (max 2)"));
    }
    Ok(format!(
        "mean {mean256:.5} (D=256) vs {mean64:.5} (D=64), {violations}/7 violations"
    ))
}

fn criterion_baseline_ordering(grid: &Grid) -> Result<String, String> {
    // The matched no-channel run: same architecture, sampling, and loss as
    // the first run, trained and evaluated with the channel bypassed.
    let base = grid.baselines[4].chamfer_mean;
    for r in &grid.sweeps[0] {
        if base > r.chamfer_mean {
            return Err(format!(
                "no-channel chamfer {base:.5} > chamfer at {} dB {:.5}",
                r.snr_db, r.chamfer_mean
            ));
        }
    }
    Ok(format!(
        "no-channel {base:.5} <= all finite-SNR chamfer (min {:.5})",
        grid.sweeps[0]
            .iter()
            .map(|r| r.chamfer_mean)
            .fold(f64::INFINITY, f64::min)
    ))
}

fn criterion_semantic_robustness(grid: &Grid) -> Result<String, String> {
    let obj = &grid.sweeps[0];
    let acc0 = obj[2].accuracy;
    let acc8 = obj[6].accuracy;
    let cm0 = obj[2].chamfer_mean;
    let cm8 = obj[6].chamfer_mean;
    if acc8 - acc0 > 0.10 {
        return Err(format!(
            "accuracy gap 8dB-0dB = {:.3} > 0.10",
            acc8 - acc0
        ));
    }
    if cm0 < 1.25 * cm8 {
        return Err(format!(
            "chamfer(0dB) {cm0:.5} < 1.25 * chamfer(8dB) {cm8:.5}"
        ));
    }
    Ok(format!(
        "accuracy gap {:.3} <= 0.10 while chamfer 0dB/8dB = {:.2}",
        acc8 - acc0,
        cm0 / cm8
    ))
}

fn criterion_task_ordering(grid: &Grid) -> Result<String, String> {
    let obj = &grid.sweeps[0];
    let clamp = &grid.sweeps[3];
    for (c, o) in clamp.iter().zip(obj) {
        if c.accuracy < o.accuracy {
            return Err(format!(
                "clamp accuracy {:.3} < object accuracy {:.3} at {} dB",
                c.accuracy, o.accuracy, o.snr_db
            ));
        }
    }
    let acc8 = obj[6].accuracy;
    if acc8 < 0.60 {
        return Err(format!("object accuracy at 8 dB = {acc8:.3} < 0.60"));
    }
    Ok(format!(
        "clamp >= object at every SNR; object accuracy at 8 dB = {acc8:.3}"
    ))
}

fn criterion_ablation_direction(grid: &Grid) -> Result<String, String> {
    let with_br = grid.sweeps[0][6].accuracy;
    let without = grid.sweeps[2][6].accuracy;
    if with_br < without {
        return Err(format!(
            "accuracy with removal {with_br:.3} < without {without:.3} at 8 dB"
        ));
    }
    Ok(format!("removal on {with_br:.3} >= off {without:.3} at 8 dB"))
}

// ---------------------------------------------------------------------------
// Criterion 12: byte-identical reproduce outputs.
// ---------------------------------------------------------------------------

fn criterion_determinism() -> Result<String, String> {
    let dir_a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir_b = tempfile::tempdir().map_err(|e| e.to_string())?;
    // Small scale: same pipeline, same seeds, two independent executions.
    runner::reproduce(dir_a.path(), None, 4, 1, 99, false).map_err(|e| e.to_string())?;
    runner::reproduce(dir_b.path(), None, 4, 1, 99, false).map_err(|e| e.to_string())?;
    let mut compared = 0;
    for name in runner::GRID_RUN_NAMES {
        for file in ["metrics.csv", "baseline.csv"] {
            let a = std::fs::read(dir_a.path().join(name).join(file)).map_err(|e| e.to_string())?;
            let b = std::fs::read(dir_b.path().join(name).join(file)).map_err(|e| e.to_string())?;
            if a != b {
                return Err(format!("{name}/{file} differs between identical runs"));
            }
            compared += 1;
        }
    }
    Ok(format!("{compared} metrics CSVs byte-identical"))
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance_criteria() {
    let mut results = Vec::new();

    record(&mut results, 1, "oracle suites (chamfer/knn/voxel/fps)", criterion_oracles());
    record(&mut results, 2, "finite-difference gradient check", criterion_gradient_check());
    record(
        &mut results,
        3,
        "encoder permutation invariance",
        criterion_permutation_invariance(),
    );
    record(&mut results, 5, "noise variance calibration", criterion_noise_calibration());

    match run_grid() {
        Ok(grid) => {
            record(&mut results, 4, "transmit power constraint", criterion_power_constraint(&grid));
            record(&mut results, 6, "geometric robustness trend", criterion_geometric_trend(&grid));
            record(&mut results, 7, "latent capacity trend", criterion_capacity_trend(&grid));
            record(&mut results, 8, "no-channel baseline ordering", criterion_baseline_ordering(&grid));
            record(&mut results, 9, "semantic robustness asymmetry", criterion_semantic_robustness(&grid));
            record(&mut results, 10, "task difficulty ordering", criterion_task_ordering(&grid));
            record(&mut results, 11, "background-removal ablation", criterion_ablation_direction(&grid));
        }
        Err(e) => {
            for (id, name) in [
                (4, "transmit power constraint"),
                (6, "geometric robustness trend"),
                (7, "latent capacity trend"),
                (8, "no-channel baseline ordering"),
                (9, "semantic robustness asymmetry"),
                (10, "task difficulty ordering"),
                (11, "background-removal ablation"),
            ] {
                record(&mut results, id, name, Err(format!("grid failed: {e}")));
            }
        }
    }

    record(&mut results, 12, "reproduce determinism", criterion_determinism());

    results.sort_by_key(|r| r.id);
    let mut failed = 0;
    for r in &results {
        match &r.result {
            Ok(detail) => println!("criterion {:>2} {:<38} PASS  ({detail})", r.id, r.name),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {:<38} FAIL  ({detail})", r.id, r.name);
            }
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
