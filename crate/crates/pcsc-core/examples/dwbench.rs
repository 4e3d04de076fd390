//! dW-shaped GEMM probe: x^T @ g with huge k.
use pcsc_core::mat::Mat;
use std::time::Instant;

fn main() {
    for (rows, cin, cout) in [(262144usize, 64usize, 64usize), (262144, 64, 128), (65536, 131, 128), (65536, 128, 256)] {
        let x = Mat::from_vec(rows, cin, (0..rows * cin).map(|i| (i % 7) as f32 * 0.1).collect());
        let g = Mat::from_vec(rows, cout, (0..rows * cout).map(|i| (i % 5) as f32 * 0.1).collect());
        let t = Instant::now();
        let dw = x.t_matmul(&g);
        let secs = t.elapsed().as_secs_f64();
        let gf = 2.0 * rows as f64 * cin as f64 * cout as f64 / secs / 1e9;
        println!("dW {cin}x{rows}x{cout}: {:.3}s {:.1} GFLOP/s (dw[0]={})", secs, gf, dw.row(0)[0]);
        // dX: g @ w^T
        let w = Mat::from_vec(cin, cout, (0..cin * cout).map(|i| (i % 3) as f32 * 0.1).collect());
        let t = Instant::now();
        let dx = g.matmul_t_raw(w.data(), cin, cout);
        let secs = t.elapsed().as_secs_f64();
        let gf = 2.0 * rows as f64 * cin as f64 * cout as f64 / secs / 1e9;
        println!("dX {rows}x{cout}x{cin}: {:.3}s {:.1} GFLOP/s (dx[0]={})", secs, gf, dx.row(0)[0]);
    }
}
