//! Command-line front end: dataset generation, embedding runs, oracle
//! verification, and the scaling benchmark.
//!
//! Exit codes: 0 success, 1 verification/data failure, 2 usage error,
//! 3 eigensolver non-convergence (partial results are still written).

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{ArgAction, Parser, Subcommand};

use pmap::data;
use pmap::feature::{FeatureKernel, LatticeForm, LatticeSpec, SparseCoo};
use pmap::kernel::SeriesMode;
use pmap::nlsa::ConvolutionSpec;
use pmap::pipeline::{self, BenchConfig, EmbedConfig, SigmaMode};
use pmap::plot;
use pmap::verify::{self, SuiteOptions};
use pmap::Dataset;

#[global_allocator]
static ALLOC: pmap::memtrack::TrackingAllocator = pmap::memtrack::TrackingAllocator;

#[derive(Parser)]
#[command(
    name = "pmap",
    version,
    about = "Matrix-free diffusion-map embeddings with linear scaling in the sample count"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a rotated-icon dataset plus its ground-truth angles.
    Generate {
        /// Icon side length in pixels; the feature dimension is side*side.
        #[arg(long, default_value_t = 32)]
        side: usize,
        /// Number of rotated samples.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output dataset file.
        #[arg(long)]
        out: PathBuf,
        /// Angle sidecar path (default: dataset path with .angles.csv).
        #[arg(long)]
        angles_out: Option<PathBuf>,
    },
    /// Embed a dataset: normalized kernel operator, Lanczos, CSV/SVG output.
    Embed {
        /// Input dataset file.
        #[arg(long)]
        input: PathBuf,
        /// Ground-truth angles CSV; enables circle metrics.
        #[arg(long)]
        angles: Option<PathBuf>,
        /// Number of embedding columns.
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Bandwidth: a positive number, or `auto` for the median-distance
        /// heuristic.
        #[arg(long, default_value = "auto")]
        sigma: String,
        /// Density-normalization exponent in [0, 1].
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Series step count / truncation order.
        #[arg(long, default_value_t = 1)]
        order: usize,
        /// Series form: `euler` or `taylor`.
        #[arg(long, default_value = "euler")]
        series: String,
        /// Keep the rank-two norm part of the squared distance.
        #[arg(long, action = ArgAction::Set, default_value_t = false)]
        norm_terms: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trailing-window length (identity weights unless --kappa is given).
        #[arg(long)]
        window: Option<usize>,
        /// Window weights: `identity:c` or a path to a whitespace-separated
        /// c*c symmetric matrix.
        #[arg(long)]
        kappa: Option<String>,
        /// Feature kernel: `identity`, `lattice:AxB[xC]`, or `coo:path`.
        #[arg(long, default_value = "identity")]
        feature_kernel: String,
        /// Scale every row to unit norm first.
        #[arg(long, action = ArgAction::Set, default_value_t = true)]
        normalize: bool,
        /// Pin the Krylov budget (disables automatic retries).
        #[arg(long)]
        max_krylov: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Also emit an SVG scatter of (psi2, psi3), read back from the CSV.
        #[arg(long, action = ArgAction::SetTrue)]
        svg: bool,
        /// Cross-check the run against a dense oracle (small N only).
        #[arg(long, action = ArgAction::SetTrue)]
        verify: bool,
    },
    /// Time embedding runs over a sample grid and fit t = a*N + b.
    Bench {
        /// Comma-separated sample counts, strictly increasing, at least 3.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<usize>,
        #[arg(long, default_value_t = 32)]
        side: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Timed repetitions per grid point (median reported).
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long, default_value = "auto")]
        sigma: String,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        order: usize,
        #[arg(long, default_value = "euler")]
        series: String,
        #[arg(long, action = ArgAction::Set, default_value_t = false)]
        norm_terms: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Also emit an SVG line plot, read back from the CSV.
        #[arg(long, action = ArgAction::SetTrue)]
        svg: bool,
    },
    /// Run the dense-oracle verification suites.
    Verify {
        /// Run a single suite: matvec, nlsa, lattice, lanczos, or pipeline.
        #[arg(long)]
        suite: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scale one side of every comparison by 1 + 1e-6; the suites must
        /// then fail (harness sensitivity check).
        #[arg(long, action = ArgAction::SetTrue)]
        perturb: bool,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            classify(&err)
        }
    };
    std::process::exit(code);
}

/// Map failures onto the exit contract: 2 for bad arguments or refused
/// configurations, 1 for everything else that goes wrong.
fn classify(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<pmap::Error>() {
        Some(pmap::Error::InvalidArgument(_))
        | Some(pmap::Error::FitRefused(_))
        | Some(pmap::Error::Parse { .. }) => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Generate {
            side,
            n,
            seed,
            out,
            angles_out,
        } => cmd_generate(side, n, seed, &out, angles_out.as_deref()),
        Command::Embed {
            input,
            angles,
            k,
            sigma,
            alpha,
            order,
            series,
            norm_terms,
            seed,
            window,
            kappa,
            feature_kernel,
            normalize,
            max_krylov,
            out,
            svg,
            verify,
        } => {
            let cfg = EmbedConfig {
                k,
                sigma: parse_sigma(&sigma)?,
                alpha,
                series_order: order,
                include_norm_terms: norm_terms,
                series_form: parse_series(&series)?,
                feature_kernel: parse_feature_kernel(&feature_kernel)?,
                convolution: parse_convolution(window, kappa.as_deref())?,
                normalize_rows: normalize,
                seed,
                max_krylov,
            };
            cmd_embed(&input, angles.as_deref(), &cfg, &out, svg, verify)
        }
        Command::Bench {
            grid,
            side,
            k,
            reps,
            sigma,
            alpha,
            order,
            series,
            norm_terms,
            seed,
            out,
            svg,
        } => {
            let cfg = BenchConfig {
                sizes: grid,
                side,
                reps,
                embed: EmbedConfig {
                    k,
                    sigma: parse_sigma(&sigma)?,
                    alpha,
                    series_order: order,
                    include_norm_terms: norm_terms,
                    series_form: parse_series(&series)?,
                    seed,
                    ..EmbedConfig::default()
                },
            };
            cmd_bench(&cfg, &out, svg)
        }
        Command::Verify {
            suite,
            seed,
            perturb,
        } => cmd_verify(suite.as_deref(), seed, perturb),
    }
}

// ---------------------------------------------------------------------------
// Flag parsing
// ---------------------------------------------------------------------------

fn parse_sigma(text: &str) -> anyhow::Result<SigmaMode> {
    if text.eq_ignore_ascii_case("auto") {
        return Ok(SigmaMode::MedianPairwise);
    }
    let value: f64 = text
        .parse()
        .map_err(|_| pmap::Error::invalid(format!("--sigma must be a number or `auto`, got {text:?}")))?;
    Ok(SigmaMode::Fixed(value))
}

fn parse_series(text: &str) -> anyhow::Result<SeriesMode> {
    match text.to_ascii_lowercase().as_str() {
        "euler" => Ok(SeriesMode::EulerStep),
        "taylor" => Ok(SeriesMode::Taylor),
        other => Err(pmap::Error::invalid(format!(
            "--series must be `euler` or `taylor`, got {other:?}"
        ))
        .into()),
    }
}

fn parse_feature_kernel(text: &str) -> anyhow::Result<Option<FeatureKernel>> {
    if text.eq_ignore_ascii_case("identity") {
        return Ok(None);
    }
    if let Some(shape) = text.strip_prefix("lattice:") {
        let sizes: Vec<usize> = shape
            .split('x')
            .map(|s| {
                s.parse().map_err(|_| {
                    pmap::Error::invalid(format!("bad lattice shape {shape:?}: {s:?} is not a size"))
                })
            })
            .collect::<Result<_, _>>()?;
        let spec = LatticeSpec::new(sizes, LatticeForm::Adjacency)?;
        return Ok(Some(FeatureKernel::Lattice(spec)));
    }
    if let Some(path) = text.strip_prefix("coo:") {
        let coo = SparseCoo::from_path(Path::new(path))?;
        return Ok(Some(FeatureKernel::Sparse(coo)));
    }
    Err(pmap::Error::invalid(format!(
        "--feature-kernel must be `identity`, `lattice:AxB[xC]`, or `coo:path`, got {text:?}"
    ))
    .into())
}

fn parse_convolution(
    window: Option<usize>,
    kappa: Option<&str>,
) -> anyhow::Result<Option<ConvolutionSpec>> {
    let spec = match kappa {
        None => match window {
            None => None,
            Some(c) => Some(ConvolutionSpec::identity(c)?),
        },
        Some(text) => {
            let spec = if let Some(c_text) = text.strip_prefix("identity:") {
                let c: usize = c_text.parse().map_err(|_| {
                    pmap::Error::invalid(format!("bad window length in --kappa {text:?}"))
                })?;
                ConvolutionSpec::identity(c)?
            } else {
                load_kappa_file(Path::new(text))?
            };
            if let Some(w) = window {
                if w != spec.window() {
                    return Err(pmap::Error::invalid(format!(
                        "--window {w} disagrees with the {}x{} weight matrix",
                        spec.window(),
                        spec.window()
                    ))
                    .into());
                }
            }
            Some(spec)
        }
    };
    Ok(spec)
}

/// Read a c*c symmetric weight matrix from a whitespace-separated text file;
/// the window length is inferred from the entry count.
fn load_kappa_file(path: &Path) -> anyhow::Result<ConvolutionSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| pmap::Error::io(path, e))
        .with_context(|| format!("reading window weights from {}", path.display()))?;
    let values: Vec<f64> = text
        .split_whitespace()
        .map(|tok| {
            tok.parse().map_err(|_| {
                pmap::Error::invalid(format!(
                    "bad weight {tok:?} in {}; expected c*c numbers",
                    path.display()
                ))
            })
        })
        .collect::<Result<_, _>>()?;
    let c = (values.len() as f64).sqrt().round() as usize;
    if c * c != values.len() || c == 0 {
        return Err(pmap::Error::invalid(format!(
            "{} holds {} numbers, which is not a square count",
            path.display(),
            values.len()
        ))
        .into());
    }
    Ok(ConvolutionSpec::new(c, values)?)
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_generate(
    side: usize,
    n: usize,
    seed: u64,
    out: &Path,
    angles_out: Option<&Path>,
) -> anyhow::Result<i32> {
    if n == 0 {
        return Err(pmap::Error::invalid("--n must be at least 1").into());
    }
    let icon = data::generate_icon(side, seed)?;
    let set = data::generate_rotated_dataset(&icon, n, seed)?;
    set.dataset.save(out)?;
    let angles_path: PathBuf = match angles_out {
        Some(p) => p.to_path_buf(),
        None => out.with_extension("angles.csv"),
    };
    data::save_angles_csv(&angles_path, &set.angles)?;
    println!(
        "wrote {} x {} dataset to {} and {} angles to {}",
        set.dataset.n_samples(),
        set.dataset.n_features(),
        out.display(),
        set.angles.len(),
        angles_path.display()
    );
    Ok(0)
}

fn cmd_embed(
    input: &Path,
    angles: Option<&Path>,
    cfg: &EmbedConfig,
    out: &Path,
    svg: bool,
    verify_run: bool,
) -> anyhow::Result<i32> {
    let ds = Dataset::load(input)?;
    std::fs::create_dir_all(out).map_err(|e| pmap::Error::io(out, e))?;
    let run = pipeline::run_embed(&ds, cfg)?;
    println!(
        "embedded {} samples (operator size {}) into {} columns; sigma = {:.6e}",
        run.config.n_samples, run.config.operator_size, run.config.k, run.config.sigma
    );
    println!(
        "eigenvalues: {}",
        run.eigenvalues
            .iter()
            .map(|v| format!("{v:.8}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    println!(
        "times: setup {:.3}s, operator {:.3}s, eigensolve {:.3}s, total {:.3}s",
        run.times.setup, run.times.degree, run.times.lanczos, run.times.total
    );

    let emb_path = out.join("embedding.csv");
    pipeline::write_embedding_csv(&emb_path, &run)?;
    pipeline::write_eigenvalues_csv(&out.join("eigenvalues.csv"), &run)?;
    let times_text = serde_json::to_string_pretty(&run.times)?;
    std::fs::write(out.join("times.json"), times_text)
        .map_err(|e| pmap::Error::io(&out.join("times.json"), e))?;
    pipeline::write_run_json(&out.join("run.json"), &run)?;

    if svg {
        // The plot is always rendered from the CSV on disk, never from
        // in-memory state, so the two artifacts cannot disagree.
        let rows = pipeline::read_embedding_csv(&emb_path)?;
        let (cx, cy, xlabel, ylabel) = match run.config.k {
            0 | 1 => {
                return Err(pmap::Error::invalid("--svg needs at least 2 embedding columns").into())
            }
            2 => (0, 1, "psi1", "psi2"),
            _ => (1, 2, "psi2", "psi3"),
        };
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r[cx], r[cy])).collect();
        let svg_text = plot::scatter_svg(&pts, "diffusion-map embedding", xlabel, ylabel)?;
        plot::write_svg(out.join("embedding.svg"), &svg_text)?;
        println!("wrote {}", out.join("embedding.svg").display());
    }

    if let Some(angles_path) = angles {
        let truth = data::load_angles_csv(angles_path)?;
        if run.config.k < 3 {
            return Err(pmap::Error::invalid(
                "circle metrics need k >= 3 (the psi2/psi3 plane)",
            )
            .into());
        }
        if truth.len() != run.columns[0].len() {
            return Err(pmap::Error::invalid(format!(
                "{} angles for an operator of size {}",
                truth.len(),
                run.columns[0].len()
            ))
            .into());
        }
        let metrics = pipeline::circle_metrics(&run.columns[1], &run.columns[2], &truth)?;
        println!(
            "circle metrics: radial_cv = {:.4}, angular_corr = {:.4}",
            metrics.radial_cv, metrics.angular_corr
        );
        let metrics_text = serde_json::to_string_pretty(&metrics)?;
        std::fs::write(out.join("metrics.json"), metrics_text)
            .map_err(|e| pmap::Error::io(&out.join("metrics.json"), e))?;
    }

    if !run.converged {
        eprintln!(
            "eigensolver did not meet its residual bound at budget {} ({} retries); \
             partial results written to {}",
            run.config.max_krylov,
            run.config.budget_retries,
            out.display()
        );
        return Ok(3);
    }

    if verify_run {
        let fk = cfg
            .feature_kernel
            .clone()
            .unwrap_or_else(|| FeatureKernel::identity(ds.n_features()));
        let report = verify::check_run_against_dense(&ds, &fk, &run)?;
        print!("{}", verify::format_report_table(std::slice::from_ref(&report)));
        if !report.passed {
            return Ok(1);
        }
    }
    Ok(0)
}

fn cmd_bench(cfg: &BenchConfig, out: &Path, svg: bool) -> anyhow::Result<i32> {
    std::fs::create_dir_all(out).map_err(|e| pmap::Error::io(out, e))?;
    let report = pipeline::run_bench(cfg)?;
    for p in &report.points {
        println!(
            "N = {:>8}: median {:.4}s over {} reps, peak {:.1} MiB",
            p.n,
            p.median_s,
            p.reps,
            p.peak_bytes as f64 / (1024.0 * 1024.0)
        );
    }
    println!(
        "fit: t = {:.4e} * N + {:.4e}  (r^2 = {:.5}) on {}",
        report.fit.slope, report.fit.intercept, report.fit.r_squared, report.machine.descriptor
    );

    let csv_path = out.join("scaling.csv");
    pipeline::write_scaling_csv(&csv_path, &report)?;
    pipeline::write_report_json(&out.join("report.json"), &report)?;

    if svg {
        let pts = pipeline::read_scaling_csv(&csv_path)?;
        let svg_text = plot::line_svg(&pts, "embedding time vs sample count", "N", "seconds")?;
        plot::write_svg(out.join("scaling.svg"), &svg_text)?;
        println!("wrote {}", out.join("scaling.svg").display());
    }
    Ok(0)
}

fn cmd_verify(suite: Option<&str>, seed: u64, perturb: bool) -> anyhow::Result<i32> {
    let opts = SuiteOptions { seed, perturb };
    let reports = match suite {
        Some(name) => vec![verify::run_suite(name, &opts)?],
        None => verify::run_all(&opts)?,
    };
    print!("{}", verify::format_report_table(&reports));
    if reports.iter().all(|r| r.passed) {
        Ok(0)
    } else {
        Ok(1)
    }
}
