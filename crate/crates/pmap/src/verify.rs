//! Self-check suites: every matrix-free path against an independent dense
//! oracle.
//!
//! Five suites, each comparing production code to a dense construction built
//! by a different route at sizes where dense is affordable:
//!
//! * `matvec` — truncated-series kernel matvecs vs explicit dense series
//!   matrices over many random datasets and configurations;
//! * `nlsa` — window-convolved matvecs (diagonal weights) vs the kernel of
//!   explicitly concatenated, weight-scaled snapshot windows;
//! * `lattice` — per-axis lattice application vs the dense Kronecker-sum
//!   matrix, for every 2D/3D cycle lattice up to 64 features, plus exact
//!   regularity identities;
//! * `lanczos` — extracted eigenpairs vs full dense eigendecompositions,
//!   with true residual norms and Krylov-basis orthonormality;
//! * `pipeline` — end-to-end normalized-operator spectra vs a dense
//!   normalization chain on rotated-icon data.
//!
//! Every check records an error/tolerance ratio, so a report's worst ratio
//! reads directly as "how close to the line did we get" (above 1 is a
//! failure).  The `perturb` option scales one side of every comparison by
//! `1 + 1e-6` — a harness sensitivity switch proving the suites can fail.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::accum;
use crate::data::{self, Dataset};
use crate::diffusion::{DiffusionConfig, DiffusionOperator};
use crate::error::{Error, Result};
use crate::feature::{FeatureKernel, LatticeForm, LatticeSpec};
use crate::kernel::{self, KernelConfig, OracleForm, SeriesMode};
use crate::lanczos::{self, LanczosConfig};
use crate::nlsa::{self, ConvolutionSpec};

/// All suite names, in run order.
pub const SUITE_NAMES: [&str; 5] = ["matvec", "nlsa", "lattice", "lanczos", "pipeline"];

/// Options shared by every suite.
#[derive(Debug, Clone, Copy)]
pub struct SuiteOptions {
    /// Base seed for all randomized inputs.
    pub seed: u64,
    /// Scale the matrix-free side of every comparison by `1 + 1e-6`; the
    /// suites must then fail, demonstrating they can detect an error of that
    /// size.
    pub perturb: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            seed: 0,
            perturb: false,
        }
    }
}

impl SuiteOptions {
    fn scale(&self) -> f64 {
        if self.perturb {
            1.0 + 1e-6
        } else {
            1.0
        }
    }
}

/// Outcome of one suite.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    /// Comparisons performed.
    pub checks: usize,
    /// Comparisons that missed their tolerance.
    pub failed: usize,
    /// Largest error/tolerance ratio seen (1.0 is the pass boundary).
    pub worst_ratio: f64,
    /// Up to eight failure descriptions.
    pub failures: Vec<String>,
}

const MAX_LISTED_FAILURES: usize = 8;

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        SuiteReport {
            name,
            passed: true,
            checks: 0,
            failed: 0,
            worst_ratio: 0.0,
            failures: Vec::new(),
        }
    }

    /// Record a toleranced comparison.
    fn check<F: FnOnce() -> String>(&mut self, err: f64, tol: f64, describe: F) {
        self.checks += 1;
        let ratio = if err == 0.0 { 0.0 } else { err / tol };
        if ratio > self.worst_ratio || !ratio.is_finite() {
            self.worst_ratio = ratio;
        }
        if !(ratio <= 1.0) {
            self.passed = false;
            self.failed += 1;
            if self.failures.len() < MAX_LISTED_FAILURES {
                self.failures
                    .push(format!("{}: error {err:.3e} exceeds {tol:.3e}", describe()));
            }
        }
    }

    /// Record a comparison that must hold exactly.
    fn check_exact<F: FnOnce() -> String>(&mut self, ok: bool, describe: F) {
        self.checks += 1;
        if !ok {
            self.passed = false;
            self.failed += 1;
            self.worst_ratio = f64::INFINITY;
            if self.failures.len() < MAX_LISTED_FAILURES {
                self.failures.push(format!("{}: exact identity violated", describe()));
            }
        }
    }
}

/// Run one suite by name.
pub fn run_suite(name: &str, opts: &SuiteOptions) -> Result<SuiteReport> {
    match name {
        "matvec" => matvec_suite(opts),
        "nlsa" => nlsa_suite(opts),
        "lattice" => lattice_suite(opts),
        "lanczos" => lanczos_suite(opts),
        "pipeline" => pipeline_suite(opts),
        other => Err(Error::invalid(format!(
            "unknown suite {other:?}; expected one of {SUITE_NAMES:?}"
        ))),
    }
}

/// Run all five suites in order.
pub fn run_all(opts: &SuiteOptions) -> Result<Vec<SuiteReport>> {
    SUITE_NAMES.iter().map(|n| run_suite(n, opts)).collect()
}

/// Render reports as an aligned text table with a summary line.
pub fn format_report_table(reports: &[SuiteReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:>7} {:>7} {:>12}  {}\n",
        "suite", "checks", "failed", "worst", "status"
    ));
    for r in reports {
        out.push_str(&format!(
            "{:<10} {:>7} {:>7} {:>12.3e}  {}\n",
            r.name,
            r.checks,
            r.failed,
            r.worst_ratio,
            if r.passed { "PASS" } else { "FAIL" }
        ));
        for f in &r.failures {
            out.push_str(&format!("    {f}\n"));
        }
        if r.failed > r.failures.len() {
            out.push_str(&format!(
                "    ... and {} more failures\n",
                r.failed - r.failures.len()
            ));
        }
    }
    let passed = reports.iter().filter(|r| r.passed).count();
    out.push_str(&format!("{passed}/{} suites pass\n", reports.len()));
    out
}

// ---------------------------------------------------------------------------
// Shared oracle helpers
// ---------------------------------------------------------------------------

fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset {
    let data: Vec<f64> = (0..n * d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    Dataset::new(data, n, d).expect("random data is finite and non-empty")
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Relative infinity-norm error between a computed vector and its oracle.
fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for (&g, &w) in got.iter().zip(want) {
        worst = worst.max((g - w).abs());
    }
    worst / inf_norm(want).max(1e-300)
}

/// Dense degree/density normalization chain, built directly on an explicit
/// kernel matrix: the oracle for the diffusion operator.  Returns the
/// symmetric normalized matrix and the `1/sqrt(second-degree)` scaling that
/// converts its eigenvectors into Markov eigenvectors.
fn dense_chain(k: &DMatrix<f64>, alpha: f64) -> (DMatrix<f64>, Vec<f64>) {
    let n = k.nrows();
    let deg: Vec<f64> = (0..n).map(|i| k.row(i).sum()).collect();
    let da: Vec<f64> = deg.iter().map(|d| d.powf(-alpha)).collect();
    let kt = DMatrix::from_fn(n, n, |i, j| da[i] * k[(i, j)] * da[j]);
    let deg2: Vec<f64> = (0..n).map(|i| kt.row(i).sum()).collect();
    let ds: Vec<f64> = deg2.iter().map(|d| 1.0 / d.sqrt()).collect();
    (DMatrix::from_fn(n, n, |i, j| ds[i] * kt[(i, j)] * ds[j]), ds)
}

fn dense_normalize(k: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
    dense_chain(k, alpha).0
}

fn dense_symmetric_psd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    (raw.transpose() * &raw) / n as f64
}

// ---------------------------------------------------------------------------
// Suite 1: series matvec vs dense series matrix
// ---------------------------------------------------------------------------

fn matvec_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("matvec");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(0x11));
    let scale = opts.scale();

    for trial in 0..50 {
        let n = rng.gen_range(8..=256);
        let d = rng.gen_range(2..=64);
        let ds = random_dataset(&mut rng, n, d);
        let cfg = KernelConfig {
            sigma: (d as f64).sqrt() * (0.5 + 1.5 * rng.gen::<f64>()),
            series_order: rng.gen_range(1..=4),
            include_norm_terms: rng.gen::<bool>(),
            series_form: if rng.gen::<bool>() {
                SeriesMode::EulerStep
            } else {
                SeriesMode::Taylor
            },
        };
        let fk = FeatureKernel::identity(d);
        let v = random_vec(&mut rng, n);

        let mut got = kernel::kernel_matvec(&ds, &cfg, &fk, &v)?;
        accum::scale(scale, &mut got);
        let dense = kernel::dense_kernel_oracle(&ds, &cfg, &fk, OracleForm::MatrixSeries)?;
        let want = (&dense * DVector::from_column_slice(&v)).as_slice().to_vec();

        report.check(rel_err(&got, &want), 1e-10, || {
            format!(
                "trial {trial}: N={n} D={d} order={} form={:?} norms={}",
                cfg.series_order, cfg.series_form, cfg.include_norm_terms
            )
        });
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Suite 2: window convolution vs concatenated snapshots
// ---------------------------------------------------------------------------

fn nlsa_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("nlsa");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(0x22));
    let scale = opts.scale();

    for &n in &[16usize, 40, 64] {
        for &c in &[2usize, 3, 8] {
            let d = 4;
            let ds = random_dataset(&mut rng, n, d);
            // Diagonal window weights: positive, distinct.
            let weights: Vec<f64> = (0..c).map(|_| 0.5 + rng.gen::<f64>()).collect();
            let mut kappa = vec![0.0; c * c];
            for (a, &w) in weights.iter().enumerate() {
                kappa[a * c + a] = w;
            }
            let spec = ConvolutionSpec::new(c, kappa)?;
            let m = n - c + 1;

            // Oracle: rows are sqrt(weight)-scaled concatenated windows, so
            // the plain kernel on them is exactly the convolved kernel.
            let mut concat = Vec::with_capacity(m * c * d);
            for i in 0..m {
                for (a, &w) in weights.iter().enumerate() {
                    let s = w.sqrt();
                    concat.extend(ds.row(i + a).iter().map(|&x| s * x));
                }
            }
            let flat = Dataset::new(concat, m, c * d)?;

            for (order, form, norms) in [
                (1usize, SeriesMode::EulerStep, false),
                (2, SeriesMode::EulerStep, true),
                (3, SeriesMode::Taylor, true),
            ] {
                let cfg = KernelConfig {
                    sigma: (c as f64 * d as f64).sqrt(),
                    series_order: order,
                    include_norm_terms: norms,
                    series_form: form,
                };
                let v = random_vec(&mut rng, m);
                let mut got = nlsa::convolved_series_matvec(
                    &ds,
                    &cfg,
                    &FeatureKernel::identity(d),
                    &spec,
                    &v,
                )?;
                accum::scale(scale, &mut got);
                let dense = kernel::dense_kernel_oracle(
                    &flat,
                    &cfg,
                    &FeatureKernel::identity(c * d),
                    OracleForm::MatrixSeries,
                )?;
                let want = (&dense * DVector::from_column_slice(&v)).as_slice().to_vec();
                report.check(rel_err(&got, &want), 1e-10, || {
                    format!("N={n} c={c} order={order} form={form:?} norms={norms}")
                });
            }
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Suite 3: lattice application vs dense Kronecker sums
// ---------------------------------------------------------------------------

fn lattice_shapes() -> Vec<Vec<usize>> {
    let mut shapes = Vec::new();
    for n1 in 3..=21 {
        for n2 in 3..=21 {
            if n1 * n2 <= 64 {
                shapes.push(vec![n1, n2]);
            }
        }
    }
    for n1 in 3..=7 {
        for n2 in 3..=7 {
            for n3 in 3..=7 {
                if n1 * n2 * n3 <= 64 {
                    shapes.push(vec![n1, n2, n3]);
                }
            }
        }
    }
    shapes
}

fn lattice_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("lattice");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(0x33));
    let scale = opts.scale();

    for shape in lattice_shapes() {
        let dim: usize = shape.iter().product();
        let n_axes = shape.len();
        for form in [LatticeForm::Adjacency, LatticeForm::Laplacian] {
            let spec = LatticeSpec::new(shape.clone(), form)?;
            let fk = FeatureKernel::Lattice(spec);
            let dense = fk.to_dense()?;
            let v = random_vec(&mut rng, dim);

            let mut got = fk.apply(&v)?;
            accum::scale(scale, &mut got);
            let want = (&dense * DVector::from_column_slice(&v)).as_slice().to_vec();
            let mut worst = 0.0f64;
            for (&g, &w) in got.iter().zip(&want) {
                worst = worst.max((g - w).abs());
            }
            report.check(worst / inf_norm(&want).max(1.0), 1e-12, || {
                format!("shape {shape:?} {form:?} vs dense Kronecker sum")
            });

            let mut ones_out = fk.apply(&vec![1.0; dim])?;
            accum::scale(scale, &mut ones_out);
            match form {
                LatticeForm::Adjacency => {
                    let want = 2.0 * n_axes as f64;
                    report.check_exact(ones_out.iter().all(|&x| x == want), || {
                        format!("shape {shape:?} adjacency * ones == {want}")
                    });
                }
                LatticeForm::Laplacian => {
                    report.check_exact(ones_out.iter().all(|&x| x == 0.0), || {
                        format!("shape {shape:?} laplacian * ones == 0")
                    });
                }
            }
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Suite 4: Lanczos vs full dense eigendecomposition
// ---------------------------------------------------------------------------

fn lanczos_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("lanczos");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(0x44));
    let scale = opts.scale();

    for trial in 0..20 {
        let n = rng.gen_range(50..=512);
        // Cover both k extremes, then draw the rest.
        let k = match trial {
            0 => 1,
            1 => 8,
            _ => rng.gen_range(1..=8),
        };
        let mat = dense_symmetric_psd(&mut rng, n);
        let seed = opts.seed.wrapping_add(1000 + trial);
        let cfg = LanczosConfig {
            k,
            tol: lanczos::DEFAULT_BREAKDOWN_TOL,
            max_krylov: Some(n),
            seed,
        };
        let mut apply = |v: &[f64]| -> Result<Vec<f64>> {
            Ok((&mat * DVector::from_column_slice(v)).as_slice().to_vec())
        };
        let mut result = lanczos::lanczos_eigsh(&mut apply, n, &cfg)?;
        for v in result.values.iter_mut() {
            *v *= scale;
        }

        let eig = mat.clone().symmetric_eigen();
        let mut oracle: Vec<f64> = eig.eigenvalues.as_slice().to_vec();
        oracle.sort_by(|a, b| a.total_cmp(b));
        let lambda_scale = oracle.last().map(|v| v.abs()).unwrap_or(0.0).max(1.0);

        for (l, (&got, &want)) in result
            .values
            .iter()
            .zip(&oracle[n - k..])
            .enumerate()
        {
            report.check(
                (got - want).abs() / want.abs().max(1.0),
                1e-8,
                || format!("trial {trial}: n={n} k={k} eigenvalue {l}"),
            );
        }

        // True residual norms, one extra matvec per pair.
        for (l, (vec, &val)) in result.vectors.iter().zip(&result.values).enumerate() {
            let av = apply(vec)?;
            let mut res = 0.0f64;
            let mut acc = accum::Kahan::default();
            for (&a, &x) in av.iter().zip(vec) {
                let r = a - val * x;
                acc.add(r * r);
            }
            res = res.max(acc.value().sqrt());
            report.check(res / lambda_scale, 1e-6, || {
                format!("trial {trial}: n={n} k={k} residual of pair {l}")
            });
        }

        // Krylov-basis orthonormality from an identical pass.
        let pass = lanczos::lanczos_pass(
            &mut apply,
            n,
            n,
            lanczos::DEFAULT_BREAKDOWN_TOL,
            seed,
        )?;
        let mut worst = 0.0f64;
        for a in 0..pass.basis.len() {
            for b in a..pass.basis.len() {
                let dot = accum::dot(&pass.basis[a], &pass.basis[b]);
                let want = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - want).abs());
            }
        }
        report.check(worst, 1e-10, || {
            format!("trial {trial}: n={n} Krylov-basis orthonormality")
        });
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Suite 5: full pipeline vs dense normalization chain
// ---------------------------------------------------------------------------

fn pipeline_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("pipeline");
    let scale = opts.scale();
    let k = 3;
    let angle_tol = 1e-6f64;

    for (idx, &n) in [96usize, 160].iter().enumerate() {
        let icon = data::generate_icon(8, opts.seed.wrapping_add(idx as u64))?;
        let set = data::generate_rotated_dataset(&icon, n, opts.seed.wrapping_add(7 + idx as u64))?;
        let ds = set.dataset.normalize_rows()?;
        let sigma = kernel::median_pairwise_sigma(&ds, opts.seed)?;
        let kcfg = KernelConfig {
            sigma,
            series_order: 1,
            include_norm_terms: false,
            series_form: SeriesMode::EulerStep,
        };
        let dcfg = DiffusionConfig {
            alpha: 1.0,
            kernel: kcfg.clone(),
            feature_kernel: FeatureKernel::identity(ds.n_features()),
            convolution: None,
        };

        // Matrix-free spectrum.
        let op = DiffusionOperator::build(dcfg, &ds)?;
        let lcfg = LanczosConfig {
            k,
            tol: lanczos::DEFAULT_BREAKDOWN_TOL,
            max_krylov: Some(n),
            seed: opts.seed,
        };
        let mut free = lanczos::lanczos_eigsh(|v| op.apply(v), n, &lcfg)?;
        for v in free.values.iter_mut() {
            *v *= scale;
        }

        // Dense chain built independently.
        let dense_k =
            kernel::dense_kernel_oracle(&ds, &kcfg, &FeatureKernel::identity(ds.n_features()), OracleForm::MatrixSeries)?;
        let dense_s = dense_normalize(&dense_k, 1.0);
        let eig = dense_s.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        // Degrees vs dense row sums.
        let mut worst_deg = 0.0f64;
        for i in 0..n {
            let want: f64 = dense_k.row(i).sum();
            worst_deg = worst_deg.max((op.degree()[i] - want).abs() / want.abs().max(1.0));
        }
        report.check(worst_deg, 1e-11, || {
            format!("N={n}: ones-trick degrees vs dense row sums")
        });

        for l in 0..k {
            let oi = order[n - k + l];
            let want = eig.eigenvalues[oi];
            let got = free.values[l];
            report.check((got - want).abs(), 1e-8, || {
                format!("N={n}: normalized-operator eigenvalue {l}")
            });

            let ov: Vec<f64> = eig.eigenvectors.column(oi).iter().cloned().collect();
            let dot = accum::dot(&free.vectors[l], &ov).abs();
            let denom = accum::norm(&free.vectors[l]) * accum::norm(&ov);
            let cos = (dot / denom).min(1.0);
            let angle = cos.acos();
            report.check(angle, angle_tol, || {
                format!("N={n}: eigenvector {l} angle vs dense pipeline")
            });
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Dense cross-check of a finished embedding run
// ---------------------------------------------------------------------------

/// Largest operator size the dense cross-check will build an explicit matrix
/// for.
pub const DENSE_CHECK_CAP: usize = 512;

/// Compare a finished embedding run against a dense oracle built from the
/// same inputs: the kernel as an explicit matrix, the normalization as
/// explicit diagonal scalings, and the spectrum from a full dense
/// eigendecomposition.  Eigenvalues must agree to `1e-8` and Markov
/// eigenvector directions to `1e-6` radians.
///
/// `ds` is the dataset as loaded (row normalization is reapplied here when
/// the run used it) and `fk` the feature kernel the run used.  Runs with a
/// window convolution or with more than [`DENSE_CHECK_CAP`] samples are
/// refused rather than checked partially.
pub fn check_run_against_dense(
    ds: &Dataset,
    fk: &FeatureKernel,
    run: &crate::pipeline::EmbedRun,
) -> Result<SuiteReport> {
    if run.config.window.is_some() {
        return Err(Error::invalid(
            "the dense cross-check does not cover window convolution",
        ));
    }
    let n = ds.n_samples();
    if n > DENSE_CHECK_CAP {
        return Err(Error::invalid(format!(
            "dense cross-check refused for {n} samples (cap {DENSE_CHECK_CAP}); \
             it builds an explicit {n}x{n} matrix"
        )));
    }
    let work = if run.config.normalize_rows {
        ds.normalize_rows()?
    } else {
        ds.clone()
    };
    let kcfg = KernelConfig {
        sigma: run.config.sigma,
        series_order: run.config.series_order,
        include_norm_terms: run.config.include_norm_terms,
        series_form: run.config.series_form,
    };
    let dense_k = kernel::dense_kernel_oracle(&work, &kcfg, fk, OracleForm::MatrixSeries)?;
    let (dense_s, markov_scale) = dense_chain(&dense_k, run.config.alpha);
    let eig = dense_s.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut report = SuiteReport::new("embed");
    let k = run.config.k;
    for l in 0..k {
        let oi = order[n - 1 - l];
        let want = eig.eigenvalues[oi];
        report.check((run.eigenvalues[l] - want).abs(), 1e-8, || {
            format!("eigenvalue {} vs dense chain", l + 1)
        });

        let mut dense_col: Vec<f64> = eig
            .eigenvectors
            .column(oi)
            .iter()
            .zip(&markov_scale)
            .map(|(&y, &s)| y * s)
            .collect();
        let norm = accum::norm(&dense_col);
        for x in dense_col.iter_mut() {
            *x /= norm;
        }
        let cos = accum::dot(&run.columns[l], &dense_col).abs().min(1.0);
        report.check(cos.acos(), 1e-6, || {
            format!("column {} direction vs dense chain", l + 1)
        });
    }
    Ok(report)
}
