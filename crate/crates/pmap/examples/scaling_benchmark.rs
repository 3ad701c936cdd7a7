//! Measure how embedding time grows with the sample count and fit a line.
//!
//! Everything in the pipeline is matrix-free, so doubling N should double
//! the time: the fit t = a*N + b should be close to exact (r^2 near 1).
//! This example runs a reduced grid so it finishes quickly; the `bench` CLI
//! subcommand runs the full-size version.

use pmap::pipeline::{run_bench, BenchConfig, EmbedConfig, SigmaMode};
use pmap::Result;

// The peak-allocation column comes from the counting allocator; binaries opt
// in by registering it globally.
#[global_allocator]
static ALLOC: pmap::memtrack::TrackingAllocator = pmap::memtrack::TrackingAllocator;

fn main() -> Result<()> {
    let cfg = BenchConfig {
        sizes: vec![250, 500, 1000, 2000, 4000],
        side: 16,
        reps: 3,
        embed: EmbedConfig {
            k: 3,
            sigma: SigmaMode::MedianPairwise,
            ..EmbedConfig::default()
        },
    };
    let report = run_bench(&cfg)?;

    println!(
        "grid on {} ({} cores), sigma fixed at {:.4} from the smallest size, {} Lanczos steps",
        report.machine.descriptor, report.machine.cores, report.sigma, report.max_krylov
    );
    for p in &report.points {
        println!(
            "N = {:>5}: median {:.4}s over {} reps, peak allocation {:.1} MiB",
            p.n,
            p.median_s,
            p.reps,
            p.peak_bytes as f64 / (1024.0 * 1024.0)
        );
    }
    println!(
        "linear fit: t = {:.3e} * N + {:.3e},  r^2 = {:.5}",
        report.fit.slope, report.fit.intercept, report.fit.r_squared
    );
    println!("all grid points converged: {}", report.all_converged);

    let t_first = report.points.first().map(|p| p.median_s).unwrap_or(0.0);
    let t_last = report.points.last().map(|p| p.median_s).unwrap_or(0.0);
    let n_ratio = report.points.last().map(|p| p.n).unwrap_or(1) as f64
        / report.points.first().map(|p| p.n).unwrap_or(1) as f64;
    println!(
        "time grew {:.1}x over a {:.0}x size range",
        t_last / t_first.max(1e-12),
        n_ratio
    );
    Ok(())
}
