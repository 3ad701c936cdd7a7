//! Apply the truncated-series Gaussian kernel without ever forming the N x N
//! matrix, and check the result against the explicit dense matrix at a size
//! where that is still affordable.
//!
//! The trick: every squared pairwise distance splits into norm terms and a
//! Gram term, so a full matvec with the squared-distance matrix costs two
//! passes through the N x D data instead of N^2 kernel evaluations.  The
//! Gaussian is then approximated by a short product/sum series in that
//! operator, which only ever needs matvecs.

use std::time::Instant;

use pmap::kernel::{dense_kernel_oracle, kernel_matvec, OracleForm};
use pmap::{Dataset, FeatureKernel, KernelConfig, Result, SeriesMode};

fn random_dataset(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    Dataset::new(data, n, d)
}

fn main() -> Result<()> {
    let (n, d) = (400, 32);
    let ds = random_dataset(n, d, 1)?;
    let cfg = KernelConfig {
        sigma: (d as f64).sqrt(),
        series_order: 3,
        include_norm_terms: true,
        series_form: SeriesMode::Taylor,
    };
    let fk = FeatureKernel::identity(d);
    let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();

    let got = kernel_matvec(&ds, &cfg, &fk, &v)?;

    // The oracle builds the same truncated series as an explicit matrix.
    let dense = dense_kernel_oracle(&ds, &cfg, &fk, OracleForm::MatrixSeries)?;
    let want: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| dense[(i, j)] * v[j]).sum())
        .collect();
    let scale = want.iter().cloned().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut worst = 0.0f64;
    for (&g, &w) in got.iter().zip(&want) {
        worst = worst.max((g - w).abs());
    }
    println!(
        "matrix-free vs dense series matvec: max relative error {:.3e}",
        worst / scale
    );
    assert!(worst / scale < 1e-10, "matrix-free result must match the dense series");

    // Doubling N roughly doubles the matvec cost — no quadratic term.
    for &size in &[2000usize, 4000, 8000] {
        let big = random_dataset(size, d, 2)?;
        let w: Vec<f64> = (0..size).map(|i| (i as f64 * 0.11).cos()).collect();
        let start = Instant::now();
        let reps = 20;
        for _ in 0..reps {
            let _ = kernel_matvec(&big, &cfg, &fk, &w)?;
        }
        println!(
            "N = {size:>5}: {:.3} ms per matvec",
            start.elapsed().as_secs_f64() * 1e3 / reps as f64
        );
    }
    Ok(())
}
