//! Phase-level timing of one standard training batch.
use pcsc_core::channel::{power_normalize_train, PowerNormState};
use pcsc_core::geometry::{chamfer_with_matches, normalize};
use pcsc_core::mat::Mat;
use pcsc_core::model::{GroupingPlan, Model, ModelConfig};
use pcsc_core::nn::BatchNorm;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 2048;
    let clouds: Vec<_> = (0..16)
        .map(|_| {
            let pts: Vec<[f32; 3]> = (0..n)
                .map(|_| {
                    [
                        rng.gen_range(-1.0f32..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ]
                })
                .collect();
            normalize(&pts).unwrap()
        })
        .collect();

    let cfg = ModelConfig::standard(256, 6);
    let mut model = Model::<f32>::new(cfg.clone(), 1).unwrap();

    let t = Instant::now();
    let plans: Vec<_> = clouds
        .iter()
        .map(|c| GroupingPlan::build(c.points(), &cfg.encoder).unwrap())
        .collect();
    println!("plans x16:        {:?}", t.elapsed());
    let plan_refs: Vec<&GroupingPlan<f32>> = plans.iter().collect();

    let t = Instant::now();
    let (z, enc_trace) = model.encode_train(&plan_refs).unwrap();
    println!("encode_train:     {:?}", t.elapsed());

    let mut state = PowerNormState::new(256);
    let t = Instant::now();
    let (zn, _pn) = power_normalize_train(&z, &mut state).unwrap();
    println!("power_norm:       {:?}", t.elapsed());

    let t = Instant::now();
    let (recon, _logits, dec_trace) = model.decode_train(&zn);
    println!("decode_train:     {:?}", t.elapsed());

    let t = Instant::now();
    let mut total = 0.0f32;
    for (s, c) in clouds.iter().enumerate() {
        let xh: Vec<[f32; 3]> = recon.row(s).chunks_exact(3).map(|v| [v[0], v[1], v[2]]).collect();
        let m = chamfer_with_matches(c.points(), &xh).unwrap();
        total += m.sum_ab + m.sum_ba;
    }
    println!("chamfer x16:      {:?}  ({total})", t.elapsed());

    let t = Instant::now();
    let g_rec = Mat::zeros(16, n * 3);
    let g_log = Mat::zeros(16, 6);
    let dz = model.decoders_backward(&dec_trace, &g_rec, &g_log);
    println!("decoders_bwd:     {:?}", t.elapsed());

    let t = Instant::now();
    model.encoder_backward(&plan_refs, &enc_trace, &dz).unwrap();
    println!("encoder_bwd:      {:?}", t.elapsed());

    // Isolated BN on an SA1-sized matrix.
    let rows = 16 * 512 * 32;
    let x = Mat::from_vec(rows, 64, (0..rows * 64).map(|i| (i % 13) as f32 * 0.1).collect());
    let mut bn = BatchNorm::<f32>::new("p", 64);
    let t = Instant::now();
    let (_o, cache) = bn.forward_train(&x);
    println!("bn fwd 262144x64: {:?}", t.elapsed());
    let t = Instant::now();
    let _dx = bn.backward(&cache, &x);
    println!("bn bwd 262144x64: {:?}", t.elapsed());
}
