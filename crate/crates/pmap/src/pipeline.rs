//! End-to-end embedding runs, circle-recovery metrics, and the scaling
//! benchmark.
//!
//! [`run_embed`] strings the pieces together: optional row normalization,
//! bandwidth resolution, the normalized diffusion operator, the Lanczos
//! solve, and recovery of the Markov eigenvectors that form the embedding
//! coordinates.  Wall time is recorded per stage, and when the solver does
//! not converge at the heuristic Krylov budget the run retries with a doubled
//! budget (up to four doublings) before giving up honestly.
//!
//! [`circle_metrics`] quantifies how circular an embedding is: the
//! coefficient of variation of point radii in the `(psi2, psi3)` plane, and
//! the absolute circular rank correlation between embedding angles and known
//! ground-truth angles.
//!
//! [`run_bench`] times whole embedding runs over a growing sample grid
//! (dataset generation excluded, operator build included), reports medians
//! over repetitions, fits `t = a * N + b` by least squares, and records peak
//! allocation per point so memory growth can be checked alongside time.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::accum;
use crate::data::{self, Dataset};
use crate::diffusion::{DiffusionConfig, DiffusionOperator};
use crate::error::{Error, Result};
use crate::feature::FeatureKernel;
use crate::kernel::{self, KernelConfig, SeriesMode};
use crate::lanczos::{self, LanczosConfig};
use crate::memtrack;
use crate::nlsa::ConvolutionSpec;

/// How the Gaussian bandwidth is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SigmaMode {
    /// Use this value directly.
    Fixed(f64),
    /// Median pairwise distance over a seeded sample subset.
    MedianPairwise,
}

/// Full configuration of an embedding run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedConfig {
    /// Number of eigenpairs (embedding columns) to extract.
    pub k: usize,
    /// Bandwidth selection.
    pub sigma: SigmaMode,
    /// Density-normalization exponent.
    pub alpha: f64,
    /// Series step count / truncation order.
    pub series_order: usize,
    /// Keep the rank-two norm part of the squared distance.
    pub include_norm_terms: bool,
    /// Euler-step or Taylor series evaluation.
    pub series_form: SeriesMode,
    /// Kernel over the feature space; `None` means identity.
    pub feature_kernel: Option<FeatureKernel>,
    /// Optional trailing-window convolution.
    pub convolution: Option<ConvolutionSpec>,
    /// Scale every row to unit norm before anything else.
    pub normalize_rows: bool,
    /// Seed for bandwidth subsampling and the eigensolver start vector.
    pub seed: u64,
    /// Hard Krylov budget; `None` uses the size heuristic with automatic
    /// doubling retries on non-convergence.
    pub max_krylov: Option<usize>,
}

impl Default for EmbedConfig {
    /// The configuration of the rotated-icon experiment: normalized rows,
    /// one Euler step, norm terms off, identity feature kernel, no
    /// convolution, full density normalization, three eigenpairs.
    fn default() -> Self {
        EmbedConfig {
            k: 3,
            sigma: SigmaMode::MedianPairwise,
            alpha: 1.0,
            series_order: 1,
            include_norm_terms: false,
            series_form: SeriesMode::EulerStep,
            feature_kernel: None,
            convolution: None,
            normalize_rows: true,
            seed: 0,
            max_krylov: None,
        }
    }
}

/// Resolved parameters echoed into every run artifact, so a run can be
/// reproduced from its own report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_samples: usize,
    pub n_features: usize,
    pub operator_size: usize,
    pub k: usize,
    pub sigma: f64,
    pub alpha: f64,
    pub series_order: usize,
    pub series_form: SeriesMode,
    pub include_norm_terms: bool,
    pub normalize_rows: bool,
    pub window: Option<usize>,
    pub feature_kernel: String,
    pub seed: u64,
    pub max_krylov: usize,
    pub budget_retries: usize,
}

/// Per-stage wall-clock seconds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StageTimes {
    /// Row normalization and bandwidth resolution.
    pub setup: f64,
    /// Operator assembly: the two degree matvecs and scale vectors.
    pub degree: f64,
    /// Eigensolve, all budget attempts included.
    pub lanczos: f64,
    /// End-to-end run time.
    pub total: f64,
}

/// A completed embedding run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedRun {
    /// Resolved configuration snapshot.
    pub config: RunConfig,
    /// Eigenvalues in descending order (`psi1` first).
    pub eigenvalues: Vec<f64>,
    /// Embedding columns `psi1..psik`, each of operator-size length:
    /// Markov eigenvectors, unit-normalized, sign-canonicalized.
    pub columns: Vec<Vec<f64>>,
    /// Per-stage timings.
    pub times: StageTimes,
    /// Whether the eigensolver met its residual contract.
    pub converged: bool,
    /// Lanczos steps in the final attempt.
    pub iterations: usize,
}

impl EmbedRun {
    /// Embedding row `(psi1..psik)` for sample (or window) `i`.
    pub fn point(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }
}

fn describe_feature_kernel(fk: &FeatureKernel) -> String {
    match fk {
        FeatureKernel::Identity { dim } => format!("identity({dim})"),
        FeatureKernel::Sparse(coo) => format!("sparse({}, nnz {})", coo.dim(), coo.nnz()),
        FeatureKernel::Lattice(spec) => format!(
            "lattice({:?}, {:?})",
            spec.axis_sizes(),
            spec.form()
        ),
    }
}

/// Run the full matrix-free embedding pipeline on a dataset.
pub fn run_embed(ds: &Dataset, cfg: &EmbedConfig) -> Result<EmbedRun> {
    if cfg.k == 0 {
        return Err(Error::invalid("at least one embedding column is required"));
    }
    let t_start = Instant::now();

    // Setup: normalization and bandwidth.
    let working: Dataset;
    let data_ref: &Dataset = if cfg.normalize_rows {
        working = ds.normalize_rows()?;
        &working
    } else {
        ds
    };
    let sigma = match cfg.sigma {
        SigmaMode::Fixed(s) => {
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::invalid(format!(
                    "bandwidth must be positive and finite, got {s}"
                )));
            }
            s
        }
        SigmaMode::MedianPairwise => kernel::median_pairwise_sigma(data_ref, cfg.seed)?,
    };
    let feature_kernel = match &cfg.feature_kernel {
        Some(fk) => fk.clone(),
        None => FeatureKernel::identity(ds.n_features()),
    };
    let diffusion_cfg = DiffusionConfig {
        alpha: cfg.alpha,
        kernel: KernelConfig {
            sigma,
            series_order: cfg.series_order,
            include_norm_terms: cfg.include_norm_terms,
            series_form: cfg.series_form,
        },
        feature_kernel,
        convolution: cfg.convolution.clone(),
    };
    let t_setup = t_start.elapsed().as_secs_f64();

    // Operator assembly (the two degree matvecs).
    let t_deg_start = Instant::now();
    let op = DiffusionOperator::build(diffusion_cfg, data_ref)?;
    let t_degree = t_deg_start.elapsed().as_secs_f64();
    let size = op.size();
    if cfg.k > size {
        return Err(Error::invalid(format!(
            "requested {} embedding columns from an operator of size {size}",
            cfg.k
        )));
    }

    // Eigensolve, doubling the Krylov budget on non-convergence unless the
    // caller pinned it.
    let t_lan_start = Instant::now();
    let mut budget = match cfg.max_krylov {
        Some(m) => m,
        None => lanczos::krylov_budget(size, cfg.k)?,
    };
    let max_retries = if cfg.max_krylov.is_some() { 0 } else { 4 };
    let mut retries = 0usize;
    let mut result = loop {
        let lcfg = LanczosConfig {
            k: cfg.k,
            tol: lanczos::DEFAULT_BREAKDOWN_TOL,
            max_krylov: Some(budget.min(size)),
            seed: cfg.seed,
        };
        let attempt = lanczos::lanczos_eigsh(|v| op.apply(v), size, &lcfg)?;
        if attempt.converged || retries >= max_retries || budget >= size {
            break attempt;
        }
        retries += 1;
        budget = (budget * 2).min(size);
    };
    let t_lanczos = t_lan_start.elapsed().as_secs_f64();

    // Largest first, then recover Markov eigenvectors as the coordinates.
    result.values.reverse();
    result.vectors.reverse();
    let mut columns = Vec::with_capacity(result.vectors.len());
    for sym_vec in &result.vectors {
        let mut col = op.recover_markov(sym_vec);
        let norm = accum::norm(&col);
        if norm > 0.0 {
            accum::scale(1.0 / norm, &mut col);
        }
        // Canonical sign: the entry of largest magnitude is positive.
        let lead = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if col[lead] < 0.0 {
            accum::scale(-1.0, &mut col);
        }
        columns.push(col);
    }

    let config = RunConfig {
        n_samples: ds.n_samples(),
        n_features: ds.n_features(),
        operator_size: size,
        k: cfg.k,
        sigma,
        alpha: cfg.alpha,
        series_order: cfg.series_order,
        series_form: cfg.series_form,
        include_norm_terms: cfg.include_norm_terms,
        normalize_rows: cfg.normalize_rows,
        window: cfg.convolution.as_ref().map(|c| c.window()),
        feature_kernel: describe_feature_kernel(&op.config().feature_kernel),
        seed: cfg.seed,
        max_krylov: budget.min(size),
        budget_retries: retries,
    };

    Ok(EmbedRun {
        config,
        eigenvalues: result.values,
        columns,
        times: StageTimes {
            setup: t_setup,
            degree: t_degree,
            lanczos: t_lanczos,
            total: t_start.elapsed().as_secs_f64(),
        },
        converged: result.converged,
        iterations: result.iterations,
    })
}

// ---------------------------------------------------------------------------
// Circle-recovery metrics
// ---------------------------------------------------------------------------

/// How circular an embedding is, and how faithfully its angles track known
/// ground truth.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CircleMetrics {
    /// Coefficient of variation (std/mean) of centered point radii in the
    /// `(psi2, psi3)` plane; 0 for a perfect circle.
    pub radial_cv: f64,
    /// Absolute circular rank correlation between embedding angles and true
    /// angles, in `[0, 1]`.
    pub angular_corr: f64,
}

/// Positions on the circle as rank-uniform angles `2*pi*rank/n`.
fn circular_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = std::f64::consts::TAU * pos as f64 / n as f64;
    }
    ranks
}

/// Circular correlation of two angle samples via their pair-sum identity:
/// with `A = sum exp(i(u - v))`, `B = sum exp(i(u + v))`, and `C_u = sum
/// exp(2iu)`, the pairwise sine-product sums reduce to `|A|^2 - |B|^2` over
/// `sqrt((n^2 - |C_u|^2)(n^2 - |C_v|^2))` — O(n) instead of O(n^2) pairs.
fn circular_correlation(u: &[f64], v: &[f64]) -> f64 {
    let n = u.len() as f64;
    let mut a_re = accum::Kahan::default();
    let mut a_im = accum::Kahan::default();
    let mut b_re = accum::Kahan::default();
    let mut b_im = accum::Kahan::default();
    let mut cu_re = accum::Kahan::default();
    let mut cu_im = accum::Kahan::default();
    let mut cv_re = accum::Kahan::default();
    let mut cv_im = accum::Kahan::default();
    for (&ui, &vi) in u.iter().zip(v) {
        a_re.add((ui - vi).cos());
        a_im.add((ui - vi).sin());
        b_re.add((ui + vi).cos());
        b_im.add((ui + vi).sin());
        cu_re.add((2.0 * ui).cos());
        cu_im.add((2.0 * ui).sin());
        cv_re.add((2.0 * vi).cos());
        cv_im.add((2.0 * vi).sin());
    }
    let a2 = a_re.value() * a_re.value() + a_im.value() * a_im.value();
    let b2 = b_re.value() * b_re.value() + b_im.value() * b_im.value();
    let cu2 = cu_re.value() * cu_re.value() + cu_im.value() * cu_im.value();
    let cv2 = cv_re.value() * cv_re.value() + cv_im.value() * cv_im.value();
    let den = ((n * n - cu2) * (n * n - cv2)).sqrt();
    if den <= 0.0 || !den.is_finite() {
        return 0.0;
    }
    (a2 - b2) / den
}

/// Quantify circle recovery of the `(psi2, psi3)` plane against known
/// rotation angles.
///
/// Radii are measured after centering at the mean point; the angular score is
/// the absolute circular rank correlation between `atan2(psi3, psi2)` and the
/// true angles, so it is invariant to rotation, reflection, and any monotone
/// warping of either angle variable.
pub fn circle_metrics(psi2: &[f64], psi3: &[f64], angles: &[f64]) -> Result<CircleMetrics> {
    let n = psi2.len();
    if n < 3 {
        return Err(Error::invalid(format!(
            "circle metrics need at least 3 points, got {n}"
        )));
    }
    if psi3.len() != n || angles.len() != n {
        return Err(Error::invalid(format!(
            "circle metrics need equal lengths, got {n}, {}, {}",
            psi3.len(),
            angles.len()
        )));
    }
    for (name, xs) in [("psi2", psi2), ("psi3", psi3), ("angles", angles)] {
        if let Some(i) = xs.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("{name} entry {i}")));
        }
    }

    let cx = accum::sum(psi2) / n as f64;
    let cy = accum::sum(psi3) / n as f64;
    let radii: Vec<f64> = psi2
        .iter()
        .zip(psi3)
        .map(|(&x, &y)| ((x - cx) * (x - cx) + (y - cy) * (y - cy)).sqrt())
        .collect();
    let mean_r = accum::sum(&radii) / n as f64;
    // The embedding columns are unit vectors, so a healthy mean radius is
    // around 1/sqrt(n); anything near machine zero means the plane collapsed.
    if mean_r <= 1e-10 {
        return Err(Error::DegenerateEmbedding(mean_r));
    }
    let var = radii
        .iter()
        .map(|&r| (r - mean_r) * (r - mean_r))
        .sum::<f64>()
        / n as f64;
    let radial_cv = var.sqrt() / mean_r;

    let theta: Vec<f64> = psi2
        .iter()
        .zip(psi3)
        .map(|(&x, &y)| (y - cy).atan2(x - cx))
        .collect();
    let u = circular_ranks(&theta);
    let v = circular_ranks(angles);
    let angular_corr = circular_correlation(&u, &v).abs().min(1.0);

    Ok(CircleMetrics {
        radial_cv,
        angular_corr,
    })
}

// ---------------------------------------------------------------------------
// Linear fit and the scaling benchmark
// ---------------------------------------------------------------------------

/// Least-squares line through timing points.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitResult {
    /// Slope in seconds per sample.
    pub slope: f64,
    /// Intercept in seconds.
    pub intercept: f64,
    /// Coefficient of determination, in `[0, 1]`.
    pub r_squared: f64,
}

/// Ordinary least squares `y = slope * x + intercept`; refuses fewer than
/// three points.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!(
            "fit needs matching lengths, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 3 {
        return Err(Error::FitRefused(format!(
            "a linear fit needs at least 3 points, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mean_x = accum::sum(xs) / n;
    let mean_y = accum::sum(ys) / n;
    let mut sxx = accum::Kahan::default();
    let mut sxy = accum::Kahan::default();
    for (&x, &y) in xs.iter().zip(ys) {
        sxx.add((x - mean_x) * (x - mean_x));
        sxy.add((x - mean_x) * (y - mean_y));
    }
    if sxx.value() <= 0.0 {
        return Err(Error::FitRefused(
            "all x values coincide; no line is determined".to_string(),
        ));
    }
    let slope = sxy.value() / sxx.value();
    let intercept = mean_y - slope * mean_x;
    let mut ss_res = accum::Kahan::default();
    let mut ss_tot = accum::Kahan::default();
    for (&x, &y) in xs.iter().zip(ys) {
        let pred = slope * x + intercept;
        ss_res.add((y - pred) * (y - pred));
        ss_tot.add((y - mean_y) * (y - mean_y));
    }
    let r_squared = if ss_tot.value() > 0.0 {
        (1.0 - ss_res.value() / ss_tot.value()).clamp(0.0, 1.0)
    } else if ss_res.value() == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(FitResult {
        slope,
        intercept,
        r_squared,
    })
}

/// Benchmark parameters: a sample-count grid over rotated-icon datasets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Sample counts, strictly increasing, at least three.
    pub sizes: Vec<usize>,
    /// Icon side length; the feature dimension is `side * side`.
    pub side: usize,
    /// Timed repetitions per grid point (median reported), at least three.
    pub reps: usize,
    /// Embedding configuration shared by every run.
    pub embed: EmbedConfig,
}

/// One benchmark grid point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BenchPoint {
    pub n: usize,
    /// Median end-to-end seconds over the repetitions.
    pub median_s: f64,
    pub reps: usize,
    /// Largest peak-allocation reading over the repetitions; 0 when the
    /// tracking allocator is not registered.
    pub peak_bytes: u64,
}

/// Host description embedded in benchmark reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MachineInfo {
    pub descriptor: String,
    pub cores: usize,
}

/// A published reference line for scale context; timings are
/// hardware-specific and are not an acceptance target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceFit {
    pub note: String,
    pub slope_s_per_sample: f64,
    pub intercept_s: f64,
    pub hardware: String,
}

/// Reference linear fit on datacenter-GPU hardware, recorded in every report
/// for context only.
pub fn reference_fit() -> ReferenceFit {
    ReferenceFit {
        note: "reference fit from GPU hardware; for scale context, not comparison".to_string(),
        slope_s_per_sample: 6.0e-6,
        intercept_s: 0.65,
        hardware: "datacenter GPU".to_string(),
    }
}

/// Results of a benchmark sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingReport {
    pub points: Vec<BenchPoint>,
    pub fit: FitResult,
    /// Resolved bandwidth shared by every run.
    pub sigma: f64,
    /// Krylov budget pinned across the grid.
    pub max_krylov: usize,
    pub side: usize,
    pub k: usize,
    pub machine: MachineInfo,
    pub reference: ReferenceFit,
    /// True when every individual run met the solver's residual contract.
    pub all_converged: bool,
}

fn detect_machine() -> MachineInfo {
    let cores = std::thread::available_parallelism()
        .map(|c| c.get())
        .unwrap_or(1);
    let descriptor = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|info| {
            info.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|s| s.trim().to_string())
        })
        .unwrap_or_else(|| format!("unknown CPU ({})", std::env::consts::ARCH));
    MachineInfo { descriptor, cores }
}

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}

/// Time embedding runs over the sample grid and fit a line to the medians.
///
/// The bandwidth is resolved once (on the smallest grid point) and the
/// Krylov budget is pinned to the largest grid point's heuristic value, so
/// every run does identical per-sample work and the N-dependence is the only
/// variable.  Peak allocation is tracked per point when the binary registers
/// the tracking allocator.
pub fn run_bench(cfg: &BenchConfig) -> Result<ScalingReport> {
    if cfg.sizes.len() < 3 {
        return Err(Error::FitRefused(format!(
            "the scaling grid needs at least 3 sizes, got {}",
            cfg.sizes.len()
        )));
    }
    if !cfg.sizes.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::invalid(
            "the scaling grid must be strictly increasing",
        ));
    }
    if cfg.reps < 3 {
        return Err(Error::invalid(format!(
            "at least 3 repetitions are required, got {}",
            cfg.reps
        )));
    }
    let window = cfg.embed.convolution.as_ref().map(|c| c.window()).unwrap_or(1);
    if cfg.sizes[0] < window {
        return Err(Error::invalid(format!(
            "smallest grid size {} is below the window length {window}",
            cfg.sizes[0]
        )));
    }

    let icon = data::generate_icon(cfg.side, cfg.embed.seed)?;

    // Resolve sigma once, on the smallest grid point, so the kernel is the
    // same object at every N.
    let mut shared = cfg.embed.clone();
    if shared.sigma == SigmaMode::MedianPairwise {
        let probe = data::generate_rotated_dataset(&icon, cfg.sizes[0], shared.seed)?;
        let probe_data = if shared.normalize_rows {
            probe.dataset.normalize_rows()?
        } else {
            probe.dataset
        };
        shared.sigma = SigmaMode::Fixed(kernel::median_pairwise_sigma(&probe_data, shared.seed)?);
    }
    let sigma = match shared.sigma {
        SigmaMode::Fixed(s) => s,
        SigmaMode::MedianPairwise => unreachable!("sigma was just resolved"),
    };

    // One budget for the whole grid: the heuristic at the largest N.
    let max_n = *cfg.sizes.last().expect("grid checked non-empty");
    let top_size = max_n + 1 - window;
    let pinned = match shared.max_krylov {
        Some(m) => m,
        None => lanczos::krylov_budget(top_size, shared.k)?,
    };
    shared.max_krylov = Some(pinned);

    let mut points = Vec::with_capacity(cfg.sizes.len());
    let mut all_converged = true;
    for (idx, &n) in cfg.sizes.iter().enumerate() {
        let set = data::generate_rotated_dataset(&icon, n, shared.seed + idx as u64)?;
        let mut secs = Vec::with_capacity(cfg.reps);
        let mut peak = 0u64;
        for _ in 0..cfg.reps {
            memtrack::reset_peak();
            let t = Instant::now();
            let run = run_embed(&set.dataset, &shared)?;
            secs.push(t.elapsed().as_secs_f64());
            peak = peak.max(memtrack::peak_bytes() as u64);
            all_converged &= run.converged;
        }
        points.push(BenchPoint {
            n,
            median_s: median(&mut secs),
            reps: cfg.reps,
            peak_bytes: peak,
        });
    }

    let xs: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.median_s).collect();
    let fit = linear_fit(&xs, &ys)?;

    Ok(ScalingReport {
        points,
        fit,
        sigma,
        max_krylov: pinned,
        side: cfg.side,
        k: shared.k,
        machine: detect_machine(),
        reference: reference_fit(),
        all_converged,
    })
}

// ---------------------------------------------------------------------------
// CSV and JSON emission
// ---------------------------------------------------------------------------

/// Write the embedding as `index,psi1..psik` rows.
pub fn write_embedding_csv(path: &Path, run: &EmbedRun) -> Result<()> {
    let mut out = String::from("index");
    for j in 1..=run.columns.len() {
        out.push_str(&format!(",psi{j}"));
    }
    out.push('\n');
    let size = run.columns.first().map(|c| c.len()).unwrap_or(0);
    for i in 0..size {
        out.push_str(&i.to_string());
        for col in &run.columns {
            out.push_str(&format!(",{:.17e}", col[i]));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read embedding rows back from [`write_embedding_csv`] output (index
/// column dropped).
pub fn read_embedding_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if !line.starts_with("index,psi1") {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    reason: "expected an `index,psi1..` header".to_string(),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                reason: "expected an index and at least one coordinate".to_string(),
            });
        }
        let mut row = Vec::with_capacity(fields.len() - 1);
        for f in &fields[1..] {
            let x: f64 = f.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                reason: format!("bad coordinate {f:?}"),
            })?;
            row.push(x);
        }
        if *width.get_or_insert(row.len()) != row.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                reason: "inconsistent column count".to_string(),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Write eigenvalues as `index,eigenvalue` rows (descending, `psi1` first).
pub fn write_eigenvalues_csv(path: &Path, run: &EmbedRun) -> Result<()> {
    let mut out = String::from("index,eigenvalue\n");
    for (i, v) in run.eigenvalues.iter().enumerate() {
        out.push_str(&format!("{},{:.17e}\n", i + 1, v));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Write the full run (config, eigenvalues, timings, convergence) as JSON.
pub fn write_run_json(path: &Path, run: &EmbedRun) -> Result<()> {
    #[derive(Serialize)]
    struct RunView<'a> {
        config: &'a RunConfig,
        eigenvalues: &'a [f64],
        times: &'a StageTimes,
        converged: bool,
        iterations: usize,
    }
    let view = RunView {
        config: &run.config,
        eigenvalues: &run.eigenvalues,
        times: &run.times,
        converged: run.converged,
        iterations: run.iterations,
    };
    let text = serde_json::to_string_pretty(&view)
        .map_err(|e| Error::invalid(format!("run serialization failed: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write the benchmark grid as `N,median_s,reps` rows.
pub fn write_scaling_csv(path: &Path, report: &ScalingReport) -> Result<()> {
    let mut out = String::from("N,median_s,reps\n");
    for p in &report.points {
        out.push_str(&format!("{},{:.6e},{}\n", p.n, p.median_s, p.reps));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read `(N, median_s)` pairs back from [`write_scaling_csv`] output.
pub fn read_scaling_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line.trim() != "N,median_s,reps" {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    reason: "expected an `N,median_s,reps` header".to_string(),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                reason: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        let n: f64 = fields[0].trim().parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            reason: format!("bad sample count {:?}", fields[0]),
        })?;
        let t: f64 = fields[1].trim().parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            reason: format!("bad median {:?}", fields[1]),
        })?;
        rows.push((n, t));
    }
    Ok(rows)
}

/// Write the full benchmark report as JSON.
pub fn write_report_json(path: &Path, report: &ScalingReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::invalid(format!("report serialization failed: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn icon_dataset(side: usize, n: usize, seed: u64) -> data::RotationSet {
        let icon = data::generate_icon(side, seed).unwrap();
        data::generate_rotated_dataset(&icon, n, seed).unwrap()
    }

    #[test]
    fn default_run_produces_k_unit_columns_and_nonneg_times() {
        let set = icon_dataset(8, 96, 1);
        let run = run_embed(&set.dataset, &EmbedConfig::default()).unwrap();
        assert_eq!(run.columns.len(), 3);
        assert_eq!(run.eigenvalues.len(), 3);
        for col in &run.columns {
            assert_eq!(col.len(), 96);
            let norm = accum::norm(col);
            assert!((norm - 1.0).abs() <= 1e-12, "column norm {norm}");
        }
        assert!(
            run.eigenvalues.windows(2).all(|w| w[0] >= w[1]),
            "eigenvalues must be descending: {:?}",
            run.eigenvalues
        );
        assert!(run.times.setup >= 0.0 && run.times.degree >= 0.0);
        assert!(run.times.lanczos >= 0.0 && run.times.total >= run.times.lanczos);
        assert!(run.converged);
        // The top eigenvalue of the Markov-similar operator is 1.
        assert!(
            (run.eigenvalues[0] - 1.0).abs() <= 1e-8,
            "top eigenvalue {}",
            run.eigenvalues[0]
        );
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let set = icon_dataset(6, 48, 2);
        let cfg = EmbedConfig::default();
        let a = run_embed(&set.dataset, &cfg).unwrap();
        let b = run_embed(&set.dataset, &cfg).unwrap();
        assert_eq!(a.eigenvalues, b.eigenvalues);
        assert_eq!(a.columns, b.columns);
    }

    #[test]
    fn identical_rows_collapse_to_the_constant_top_vector() {
        let row: Vec<f64> = (0..9).map(|j| 0.1 * (j as f64) + 0.2).collect();
        let data: Vec<f64> = row.iter().cycle().take(9 * 24).cloned().collect();
        let ds = Dataset::new(data, 24, 9).unwrap();
        let cfg = EmbedConfig {
            sigma: SigmaMode::Fixed(1.0),
            ..EmbedConfig::default()
        };
        let run = run_embed(&ds, &cfg).unwrap();
        assert!((run.eigenvalues[0] - 1.0).abs() <= 1e-10);
        let psi1 = &run.columns[0];
        let first = psi1[0];
        for &x in psi1.iter() {
            assert!(
                (x - first).abs() <= 1e-8 * first.abs(),
                "psi1 must be constant, saw {x} vs {first}"
            );
        }
        // The remaining pairs sit far below the stationary eigenvalue.
        assert!(run.eigenvalues[1] < 0.5 && run.eigenvalues[2] < 0.5);
    }

    #[test]
    fn pinned_budget_disables_retries_and_reports_nonconvergence() {
        let set = icon_dataset(8, 128, 3);
        let cfg = EmbedConfig {
            max_krylov: Some(3),
            ..EmbedConfig::default()
        };
        let run = run_embed(&set.dataset, &cfg).unwrap();
        assert!(!run.converged, "three Krylov vectors cannot satisfy the residual bound");
        assert_eq!(run.config.max_krylov, 3);
        assert_eq!(run.config.budget_retries, 0);
        assert_eq!(run.columns.len(), 3, "partial results are still returned");
    }

    #[test]
    fn perfect_circle_scores_zero_cv_and_full_correlation() {
        // Evenly spaced angles so the sample mean coincides with the true
        // center (random angles would offset the centering by O(1/sqrt(n))
        // and that offset alone would read as radial spread).
        let n = 512;
        let angles: Vec<f64> = (0..n).map(|i| TAU * i as f64 / n as f64).collect();
        let psi2: Vec<f64> = angles.iter().map(|a| a.cos()).collect();
        let psi3: Vec<f64> = angles.iter().map(|a| a.sin()).collect();
        let m = circle_metrics(&psi2, &psi3, &angles).unwrap();
        assert!(m.radial_cv <= 1e-12, "radial_cv {}", m.radial_cv);
        assert!(m.angular_corr >= 1.0 - 1e-12, "angular_corr {}", m.angular_corr);
    }

    #[test]
    fn rotated_and_reflected_circles_still_correlate_fully() {
        let n = 400;
        let angles: Vec<f64> = (0..n).map(|i| TAU * i as f64 / n as f64).collect();
        // Embedding angles offset by 1.1 rad and running the other way.
        let psi2: Vec<f64> = angles.iter().map(|a| (1.1 - a).cos()).collect();
        let psi3: Vec<f64> = angles.iter().map(|a| (1.1 - a).sin()).collect();
        let m = circle_metrics(&psi2, &psi3, &angles).unwrap();
        assert!(m.angular_corr >= 1.0 - 1e-10, "angular_corr {}", m.angular_corr);
    }

    #[test]
    fn gaussian_cloud_matches_rayleigh_radial_cv_and_zero_correlation() {
        // 2D standard normal: radii are Rayleigh, cv = sqrt(4/pi - 1) ~ 0.523.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mut normal = || {
            // Box-Muller.
            let u1: f64 = rng.gen::<f64>().max(1e-300);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
        };
        let psi2: Vec<f64> = (0..n).map(|_| normal()).collect();
        let psi3: Vec<f64> = (0..n).map(|_| normal()).collect();
        let mut rng2 = ChaCha8Rng::seed_from_u64(6);
        let angles: Vec<f64> = (0..n).map(|_| rng2.gen::<f64>() * TAU).collect();
        let m = circle_metrics(&psi2, &psi3, &angles).unwrap();
        let want_cv = (4.0 / std::f64::consts::PI - 1.0f64).sqrt();
        assert!(
            (m.radial_cv - want_cv).abs() <= 0.1,
            "radial_cv {} vs Rayleigh {want_cv}",
            m.radial_cv
        );
        assert!(m.angular_corr <= 0.05, "angular_corr {}", m.angular_corr);
    }

    #[test]
    fn ellipse_radial_cv_matches_quadrature() {
        // 2:1 ellipse sampled uniformly in parameter; compare the sample cv
        // against dense-grid quadrature of the same functional.
        let n = 4096;
        let ts: Vec<f64> = (0..n).map(|i| TAU * i as f64 / n as f64).collect();
        let psi2: Vec<f64> = ts.iter().map(|t| 2.0 * t.cos()).collect();
        let psi3: Vec<f64> = ts.iter().map(|t| t.sin()).collect();
        let m = circle_metrics(&psi2, &psi3, &ts).unwrap();

        let quad = 1 << 20;
        let mut sum_r = accum::Kahan::default();
        let mut sum_r2 = accum::Kahan::default();
        for i in 0..quad {
            let t = TAU * (i as f64 + 0.5) / quad as f64;
            let r = ((2.0 * t.cos()).powi(2) + t.sin().powi(2)).sqrt();
            sum_r.add(r);
            sum_r2.add(r * r);
        }
        let er = sum_r.value() / quad as f64;
        let er2 = sum_r2.value() / quad as f64;
        let want = (er2 / (er * er) - 1.0).sqrt();
        assert!(
            (m.radial_cv - want).abs() <= 0.02 * want,
            "ellipse radial_cv {} vs quadrature {want}",
            m.radial_cv
        );
    }

    #[test]
    fn collapsed_embedding_is_a_degenerate_error() {
        let zeros = vec![0.0; 16];
        let angles: Vec<f64> = (0..16).map(|i| i as f64 * 0.3).collect();
        match circle_metrics(&zeros, &zeros, &angles) {
            Err(Error::DegenerateEmbedding(r)) => assert!(r <= 1e-10),
            other => panic!("expected a degenerate-embedding error, got {other:?}"),
        }
    }

    #[test]
    fn linear_fit_recovers_exact_lines_and_refuses_short_input() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        assert!((fit.slope - 2.5).abs() < 1e-12);
        assert!((fit.intercept + 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);

        match linear_fit(&[1.0, 2.0], &[1.0, 2.0]) {
            Err(Error::FitRefused(_)) => {}
            other => panic!("expected fit refusal, got {other:?}"),
        }
    }

    #[test]
    fn noisy_line_fit_reports_high_but_imperfect_r_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 1.0 + rng.gen::<f64>() - 0.5).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        assert!(fit.r_squared > 0.95 && fit.r_squared < 1.0);
        assert!((fit.slope - 3.0).abs() < 0.1);
    }

    #[test]
    fn bench_rejects_bad_grids() {
        let base = BenchConfig {
            sizes: vec![64],
            side: 6,
            reps: 3,
            embed: EmbedConfig::default(),
        };
        match run_bench(&base) {
            Err(Error::FitRefused(_)) => {}
            other => panic!("single-point grid must refuse the fit, got {other:?}"),
        }
        let nonmono = BenchConfig {
            sizes: vec![64, 48, 96],
            ..base.clone()
        };
        assert!(run_bench(&nonmono).is_err());
        let low_reps = BenchConfig {
            sizes: vec![32, 64, 96],
            reps: 1,
            ..base
        };
        assert!(run_bench(&low_reps).is_err());
    }

    #[test]
    fn small_bench_produces_monotone_grid_and_valid_fit() {
        let cfg = BenchConfig {
            sizes: vec![48, 96, 144],
            side: 5,
            reps: 3,
            embed: EmbedConfig::default(),
        };
        let report = run_bench(&cfg).unwrap();
        assert_eq!(report.points.len(), 3);
        assert!(report.points.windows(2).all(|w| w[0].n < w[1].n));
        assert!((0.0..=1.0).contains(&report.fit.r_squared));
        assert!(report.points.iter().all(|p| p.median_s >= 0.0 && p.reps == 3));
        assert!(report.sigma > 0.0);
        assert!(report.machine.cores >= 1);
        // Peak tracking is live in the unit-test binary.
        assert!(report.points.iter().all(|p| p.peak_bytes > 0));
    }

    #[test]
    fn embedding_csv_round_trips() {
        let set = icon_dataset(6, 32, 8);
        let run = run_embed(&set.dataset, &EmbedConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("embedding.csv");
        write_embedding_csv(&path, &run).unwrap();
        let rows = read_embedding_csv(&path).unwrap();
        assert_eq!(rows.len(), 32);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), 3);
            for (j, &x) in row.iter().enumerate() {
                assert_eq!(x, run.columns[j][i], "round-trip must be exact");
            }
        }
    }

    #[test]
    fn scaling_csv_round_trips() {
        let report = ScalingReport {
            points: vec![
                BenchPoint { n: 100, median_s: 0.5, reps: 3, peak_bytes: 1 },
                BenchPoint { n: 200, median_s: 1.0, reps: 3, peak_bytes: 2 },
                BenchPoint { n: 400, median_s: 2.0, reps: 3, peak_bytes: 4 },
            ],
            fit: FitResult { slope: 5e-3, intercept: 0.0, r_squared: 1.0 },
            sigma: 1.0,
            max_krylov: 10,
            side: 6,
            k: 3,
            machine: MachineInfo { descriptor: "test".into(), cores: 1 },
            reference: reference_fit(),
            all_converged: true,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scaling.csv");
        write_scaling_csv(&path, &report).unwrap();
        let rows = read_scaling_csv(&path).unwrap();
        assert_eq!(rows, vec![(100.0, 0.5), (200.0, 1.0), (400.0, 2.0)]);
    }

    #[test]
    fn run_json_is_valid_and_carries_the_resolved_config() {
        let set = icon_dataset(6, 40, 9);
        let run = run_embed(&set.dataset, &EmbedConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        write_run_json(&path, &run).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["config"]["n_samples"], 40);
        assert_eq!(parsed["config"]["k"], 3);
        assert!(parsed["config"]["sigma"].as_f64().unwrap() > 0.0);
        assert_eq!(parsed["converged"], true);
    }
}
