//! End-to-end tests of the `pmap` binary: every subcommand, every exit code.

use std::path::Path;
use std::process::{Command, Output};

fn pmap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmap"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("the pmap binary should spawn")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn assert_exit(out: &Output, want: i32, context: &str) {
    assert_eq!(
        out.status.code(),
        Some(want),
        "{context}: expected exit {want}\nstdout:\n{}\nstderr:\n{}",
        stdout(out),
        stderr(out)
    );
}

/// Parse a CSV with a header row into numeric rows, dropping the index column.
fn read_csv(path: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(path).expect("CSV output should exist");
    text.lines()
        .skip(1)
        .map(|line| {
            line.split(',')
                .skip(1)
                .map(|tok| tok.parse().expect("CSV cells should be numbers"))
                .collect()
        })
        .collect()
}

#[test]
fn generate_is_deterministic_and_writes_the_angle_sidecar() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = pmap(dir, &["generate", "--side", "8", "--n", "48", "--seed", "9", "--out", "a.pmap"]);
    assert_exit(&out, 0, "first generate");
    assert!(stdout(&out).contains("48 x 64"), "summary should state the shape");
    let out = pmap(dir, &["generate", "--side", "8", "--n", "48", "--seed", "9", "--out", "b.pmap"]);
    assert_exit(&out, 0, "second generate");

    let a = std::fs::read(dir.join("a.pmap")).unwrap();
    let b = std::fs::read(dir.join("b.pmap")).unwrap();
    assert_eq!(a, b, "same seed must produce byte-identical datasets");

    let angles = std::fs::read_to_string(dir.join("a.angles.csv")).unwrap();
    assert_eq!(
        angles.lines().count(),
        49,
        "angle sidecar should hold a header plus one row per sample"
    );
}

#[test]
fn generate_rejects_an_empty_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let out = pmap(tmp.path(), &["generate", "--n", "0", "--out", "x.pmap"]);
    assert_exit(&out, 2, "generate with --n 0");
}

#[test]
fn embed_writes_csv_svg_and_passes_the_dense_cross_check() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = pmap(dir, &["generate", "--side", "8", "--n", "64", "--seed", "3", "--out", "d.pmap"]);
    assert_exit(&out, 0, "generate");

    let out = pmap(
        dir,
        &[
            "embed", "--input", "d.pmap", "--angles", "d.angles.csv", "--k", "3",
            "--out", "run", "--svg", "--verify", "--max-krylov", "64",
        ],
    );
    assert_exit(&out, 0, "embed with --svg --verify");
    let text = stdout(&out);
    assert!(text.contains("circle metrics"), "angles should trigger metrics");
    assert!(text.contains("PASS"), "the dense cross-check should pass");

    let rows = read_csv(&dir.join("run/embedding.csv"));
    assert_eq!(rows.len(), 64, "one embedding row per sample");
    assert!(rows.iter().all(|r| r.len() == 3), "three columns for k = 3");

    let eig = read_csv(&dir.join("run/eigenvalues.csv"));
    assert_eq!(eig.len(), 3);
    assert!(
        (eig[0][0] - 1.0).abs() <= 1e-6,
        "top Markov eigenvalue should be 1, got {}",
        eig[0][0]
    );
    assert!(
        eig.windows(2).all(|w| w[0][0] >= w[1][0]),
        "eigenvalues.csv should be in descending order"
    );

    let svg = std::fs::read_to_string(dir.join("run/embedding.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("circle"), "scatter SVG expected");

    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("run/run.json")).unwrap()).unwrap();
    assert_eq!(run["converged"], serde_json::Value::Bool(true));
    assert_eq!(run["config"]["k"], 3);

    let times: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("run/times.json")).unwrap()).unwrap();
    assert!(times["total"].as_f64().unwrap() >= 0.0);
}

#[test]
fn embedding_a_dataset_of_identical_rows_gives_the_known_spectrum() {
    // N identical unit rows: the Gram matrix is all ones, so with the norm
    // part dropped the one-step kernel is I + 2G/sigma^2 and the normalized
    // operator has eigenvalue 1 on the constant vector and the (N-1)-fold
    // value 1/(1 + 2N/sigma^2).  This also forces the eigensolver through its
    // breakdown-deflation path, since the Krylov space from any single start
    // vector has dimension 2.
    let n = 16usize;
    let d = 4usize;
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    let mut bytes = Vec::new();
    bytes.extend_from_slice(b"PMAP");
    bytes.extend_from_slice(&1u32.to_le_bytes());
    bytes.extend_from_slice(&(n as u32).to_le_bytes());
    bytes.extend_from_slice(&(d as u32).to_le_bytes());
    for _ in 0..n * d {
        bytes.extend_from_slice(&0.5f64.to_le_bytes());
    }
    std::fs::write(dir.join("flat.pmap"), bytes).unwrap();

    let out = pmap(
        dir,
        &["embed", "--input", "flat.pmap", "--k", "3", "--sigma", "1.0", "--out", "run"],
    );
    assert_exit(&out, 0, "embed identical rows");

    let eig = read_csv(&dir.join("run/eigenvalues.csv"));
    let expected_rest = 1.0 / (1.0 + 2.0 * n as f64);
    assert!((eig[0][0] - 1.0).abs() <= 1e-10, "lambda1 = 1, got {}", eig[0][0]);
    for (i, row) in eig.iter().enumerate().skip(1) {
        assert!(
            (row[0] - expected_rest).abs() <= 1e-8,
            "lambda{} should be {expected_rest}, got {}",
            i + 1,
            row[0]
        );
    }

    let rows = read_csv(&dir.join("run/embedding.csv"));
    let psi1: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let spread = psi1.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x))
        - psi1.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    assert!(spread <= 1e-10, "psi1 must be constant, spread {spread}");
}

#[test]
fn a_pinned_krylov_budget_that_cannot_converge_exits_3_with_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = pmap(dir, &["generate", "--side", "8", "--n", "128", "--seed", "1", "--out", "d.pmap"]);
    assert_exit(&out, 0, "generate");

    let out = pmap(
        dir,
        &["embed", "--input", "d.pmap", "--k", "3", "--out", "run", "--max-krylov", "3"],
    );
    assert_exit(&out, 3, "embed with a 3-step budget");
    assert!(
        stderr(&out).contains("residual"),
        "non-convergence should be explained on stderr"
    );

    // Partial results are still written, and the JSON records the failure.
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("run/run.json")).unwrap()).unwrap();
    assert_eq!(run["converged"], serde_json::Value::Bool(false));
    assert_eq!(read_csv(&dir.join("run/embedding.csv")).len(), 128);
}

#[test]
fn bench_needs_at_least_three_grid_points() {
    let tmp = tempfile::tempdir().unwrap();
    let out = pmap(
        tmp.path(),
        &["bench", "--grid", "64,128", "--side", "8", "--out", "b"],
    );
    assert_exit(&out, 2, "bench with a 2-point grid");
}

#[test]
fn bench_writes_the_scaling_table_fit_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = pmap(
        dir,
        &["bench", "--grid", "48,96,192", "--side", "8", "--reps", "3", "--out", "b", "--svg"],
    );
    assert_exit(&out, 0, "bench on a 3-point grid");
    assert!(stdout(&out).contains("fit: t ="), "the fit line should be printed");

    let pts = read_csv(&dir.join("b/scaling.csv"));
    assert_eq!(pts.len(), 3, "one row per grid point");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("b/report.json")).unwrap()).unwrap();
    assert!(report["fit"]["r_squared"].as_f64().unwrap() > 0.0);
    assert_eq!(report["points"].as_array().unwrap().len(), 3);
    assert!(report["all_converged"].as_bool().unwrap());

    let svg = std::fs::read_to_string(dir.join("b/scaling.svg")).unwrap();
    assert!(svg.contains("polyline"), "line plot expected");
}

#[test]
fn the_fast_verification_suite_passes_and_perturbation_is_caught() {
    let tmp = tempfile::tempdir().unwrap();
    let out = pmap(tmp.path(), &["verify", "--suite", "lattice"]);
    assert_exit(&out, 0, "verify --suite lattice");
    assert!(stdout(&out).contains("PASS"));

    let out = pmap(tmp.path(), &["verify", "--suite", "lattice", "--perturb"]);
    assert_exit(&out, 1, "perturbed suites must fail");
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn unknown_flags_and_bad_values_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = pmap(dir, &["embed", "--no-such-flag"]);
    assert_exit(&out, 2, "unknown flag");

    pmap(dir, &["generate", "--side", "8", "--n", "8", "--out", "d.pmap"]);
    let out = pmap(
        dir,
        &["embed", "--input", "d.pmap", "--sigma", "wide", "--out", "r"],
    );
    assert_exit(&out, 2, "non-numeric sigma");

    let out = pmap(
        dir,
        &["embed", "--input", "d.pmap", "--series", "chebyshev", "--out", "r"],
    );
    assert_exit(&out, 2, "unsupported series form");
}
