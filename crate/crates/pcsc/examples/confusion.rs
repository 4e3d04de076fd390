//! Prints the per-class confusion matrix of a trained run at one SNR.
//!
//! Usage: confusion <run_dir> <data_dir> [snr_db]

use pcsc_core::channel::{noise_sigma, power_normalize_eval, standard_normal_vec};
use pcsc_core::mat::Mat;
use pcsc_core::model::GroupingPlan;
use pcsc_core::training::Task;
use pcsc::runner;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let run_dir = std::path::Path::new(&args[1]);
    let data_dir = std::path::Path::new(&args[2]);
    let snr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(8.0);

    let run = runner::load_run(run_dir)?;
    let test = runner::test_samples(&run, data_dir)?;
    let n_classes = run.model.cfg.n_classes;
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    let sigma = noise_sigma::<f32>(snr);

    for (i, s) in test.iter().enumerate() {
        let plan = GroupingPlan::build(s.cloud.points(), &run.model.cfg.encoder)?;
        let z = run.model.encode_eval(&[&plan])?;
        let mut zn = power_normalize_eval(&z, &run.power_norm);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        rng.set_stream(i as u64);
        let noise = standard_normal_vec::<f32, _>(&mut rng, zn.cols());
        for (v, n) in zn.row_mut(0).iter_mut().zip(&noise) {
            *v += sigma * n;
        }
        let (_, logits) = run.model.decode_eval(&zn);
        let row = logits.row(0);
        let mut argmax = 0;
        for c in 1..row.len() {
            if row[c] > row[argmax] {
                argmax = c;
            }
        }
        let label = match run.cfg.task {
            Task::Object => s.object_class,
            Task::ClampDetection => usize::from(s.clamp_present),
        };
        confusion[label][argmax] += 1;
    }

    println!("confusion at {snr} dB (rows = truth):");
    let mut correct = 0;
    let mut total = 0;
    for (c, row) in confusion.iter().enumerate() {
        print!("class {c}: ");
        for v in row {
            print!("{v:>4}");
        }
        let n: usize = row.iter().sum();
        correct += row[c];
        total += n;
        println!("   acc {:.2}", row[c] as f64 / n.max(1) as f64);
    }
    println!("overall: {:.3}", correct as f64 / total as f64);
    let _ = Mat::<f32>::zeros(1, 1);
    Ok(())
}
