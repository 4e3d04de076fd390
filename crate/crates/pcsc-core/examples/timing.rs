//! Rough throughput probe for one standard-size training batch.
use pcsc_core::geometry::normalize;
use pcsc_core::model::{GroupingPlan, Model, ModelConfig};
use pcsc_core::training::{train, LabeledSample, TrainConfig};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 2048;
    let samples: Vec<LabeledSample<f32>> = (0..32)
        .map(|i| {
            let pts: Vec<[f32; 3]> = (0..n)
                .map(|_| {
                    [
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ]
                })
                .collect();
            LabeledSample {
                cloud: normalize(&pts).unwrap(),
                object_class: i % 6,
                clamp_present: i % 2 == 0,
            }
        })
        .collect();

    let t0 = Instant::now();
    let cfg_model = ModelConfig::standard(256, 6);
    let plan = GroupingPlan::build(samples[0].cloud.points(), &cfg_model.encoder).unwrap();
    println!("plan build: {:?}", t0.elapsed());
    drop(plan);

    let mut cfg = TrainConfig::new(cfg_model);
    cfg.epochs = 1;
    cfg.batch_size = 16;
    let t0 = Instant::now();
    let out = train(&samples, &cfg).unwrap();
    println!(
        "1 epoch / 32 samples (incl. plan building): {:?}; rec loss {:.3}",
        t0.elapsed(),
        out.history.epochs[0].loss_rec_sum
    );

    // Second run with 2 epochs to separate plan cost from epoch cost.
    let mut cfg2 = cfg.clone();
    cfg2.epochs = 2;
    let t0 = Instant::now();
    let _ = train(&samples, &cfg2).unwrap();
    println!("2 epochs / 32 samples: {:?}", t0.elapsed());
}
