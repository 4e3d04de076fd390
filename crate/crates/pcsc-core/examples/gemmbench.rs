//! Raw GEMM throughput probe.
use pcsc_core::mat::Mat;
use std::time::Instant;

fn main() {
    for (m, k, n) in [(262144, 64, 64), (262144, 64, 128), (65536, 131, 128), (4096, 512, 1024)] {
        let a = Mat::from_vec(m, k, (0..m * k).map(|i| (i % 7) as f32 * 0.1).collect());
        let b = Mat::from_vec(k, n, (0..k * n).map(|i| (i % 5) as f32 * 0.1).collect());
        let t = Instant::now();
        let reps = 3;
        for _ in 0..reps {
            let c = a.matmul(&b);
            std::hint::black_box(c);
        }
        let secs = t.elapsed().as_secs_f64() / reps as f64;
        let gf = 2.0 * m as f64 * k as f64 * n as f64 / secs / 1e9;
        println!("{m}x{k}x{n}: {:.3}s  {:.1} GFLOP/s", secs, gf);
    }
}
