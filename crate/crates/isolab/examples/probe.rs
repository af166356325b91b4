use isolab::linalg::{smallest_eigenpairs, SymCsr};

fn main() {
    // 5-point Neumann Laplacian on the unit square [0,1]^2, m = h^2.
    // lambda_1 = pi^2 (doubly degenerate).
    for n in [48usize, 96] {
        let h = 1.0 / n as f64;
        let idx = |ix: usize, iy: usize| iy * n + ix;
        let mut trips = Vec::new();
        for iy in 0..n {
            for ix in 0..n {
                let i = idx(ix, iy);
                if ix + 1 < n {
                    let j = idx(ix + 1, iy);
                    trips.push((i, i, 1.0));
                    trips.push((j, j, 1.0));
                    trips.push((i, j, -1.0));
                }
                if iy + 1 < n {
                    let j = idx(ix, iy + 1);
                    trips.push((i, i, 1.0));
                    trips.push((j, j, 1.0));
                    trips.push((i, j, -1.0));
                }
            }
        }
        let a = SymCsr::from_upper_triplets(n * n, &trips);
        let m = vec![h * h; n * n];
        let ones = vec![1.0; n * n];
        let t = std::time::Instant::now();
        match smallest_eigenpairs(&a, &m, &[ones], 2, 3, 1e-7, 3000) {
            Ok(p) => println!(
                "n={n}: l1={:.6} l2={:.6} (exact {:.6}) res {:.1e} elapsed {:?}",
                p[0].value, p[1].value, std::f64::consts::PI.powi(2), p[0].residual, t.elapsed()
            ),
            Err(e) => {
                let msg = format!("{e}");
                println!("n={n} FAILED: {}", &msg[..msg.len().min(300)]);
            }
        }
    }
}
