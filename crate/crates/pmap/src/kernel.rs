//! Matrix-free squared-distance and truncated-series kernel operators.
//!
//! The whole crate rests on one identity: the matrix of pairwise squared
//! distances splits as
//!
//! ```text
//! R2[i][j] = s[i] + s[j] - 2 * (R R^T)[i][j]
//! ```
//!
//! with `s` the squared row norms, so `R2 * v` costs two passes over the
//! data — project (`R^T v`), expand (`R * .`) — plus two rank-one terms, all
//! O(N * D) and never an N x N matrix.  Kernel operators built from powers of
//! `R2` inherit that cost: an Euler-discretized heat step `B = I - R2 /
//! (n * sigma^2)` applied `n` times, or a Horner-evaluated truncation of
//! `exp(-R2 / sigma^2)` under matrix-power semantics.  A feature kernel can
//! be inserted between the two Gram passes, turning `R R^T` into `R k R^T`
//! without changing the cost class.
//!
//! Elementwise powers of the Gaussian do not factor this way, which is why
//! the matvec paths use matrix-power semantics throughout; the pointwise
//! Gaussian survives only as a dense small-N reference in
//! [`dense_kernel_oracle`], capped so no production path can smuggle in an
//! O(N^2) step.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::accum::{self, Kahan};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::feature::FeatureKernel;

/// Largest N for which dense oracle construction is allowed by default.
pub const DENSE_ORACLE_CAP: usize = 4096;

/// How the truncated kernel series is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeriesMode {
    /// `n` sequential applications of `B = I - R2 / (n * sigma^2)`.
    EulerStep,
    /// Horner evaluation of `sum_k (-1)^k / k! * (R2 / sigma^2)^k` truncated
    /// at `series_order`.
    Taylor,
}

/// Bandwidth and series parameters for the kernel operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    /// Gaussian bandwidth `sigma` (the kernel argument is `R2 / sigma^2`).
    pub sigma: f64,
    /// Step count `n` (Euler form) or truncation order (Taylor form).
    pub series_order: usize,
    /// Keep the rank-two `s[i] + s[j]` part of the squared distance.  The
    /// pure-Gram variant (`false`) is the form used by the production
    /// diffusion operator: on row-normalized data the dropped part is a
    /// constant shift absorbed by degree normalization.
    pub include_norm_terms: bool,
    /// Evaluation scheme.
    pub series_form: SeriesMode,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            sigma: 1.0,
            series_order: 1,
            include_norm_terms: false,
            series_form: SeriesMode::EulerStep,
        }
    }
}

impl KernelConfig {
    /// Validate bandwidth and order.
    pub fn validated(self) -> Result<Self> {
        if !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(Error::invalid(format!(
                "kernel bandwidth sigma must be a positive finite number, got {}",
                self.sigma
            )));
        }
        if self.series_order == 0 {
            return Err(Error::invalid("series order must be at least 1"));
        }
        if self.series_order > 10_000 {
            return Err(Error::invalid(format!(
                "series order {} is unreasonably large",
                self.series_order
            )));
        }
        Ok(self)
    }
}

/// Squared Euclidean norm of every dataset row (compensated, cached).
pub fn squared_norms(ds: &Dataset) -> &[f64] {
    ds.squared_norms()
}

/// Something that can apply a Gram-like product `G * v` and knows the norm
/// weights pairing with it.  The plain dataset Gram and the window-convolved
/// Gram both implement this, so one series engine serves both.
pub(crate) trait GramAction {
    /// Length of the vectors the action accepts.
    fn operand_len(&self) -> usize;
    /// `out = G * v`.
    fn gram_into(&mut self, v: &[f64], out: &mut [f64]) -> Result<()>;
    /// Weights standing in for the squared norms in the rank-two term.
    fn norm_weights(&mut self) -> Result<&[f64]>;
}

/// Plain dataset Gram action `R k R^T` with an optional feature kernel `k`.
pub(crate) struct DatasetGram<'a> {
    ds: &'a Dataset,
    fk: &'a FeatureKernel,
    proj: Vec<f64>,
    proj_comp: Vec<f64>,
    mixed: Vec<f64>,
    /// Number of full O(N*D) Gram passes performed (cost bookkeeping).
    pub(crate) gram_passes: u64,
}

impl<'a> DatasetGram<'a> {
    pub(crate) fn new(ds: &'a Dataset, fk: &'a FeatureKernel) -> Result<Self> {
        if fk.dim() != ds.n_features() {
            return Err(Error::invalid(format!(
                "feature kernel dimension {} does not match {} dataset features",
                fk.dim(),
                ds.n_features()
            )));
        }
        let d = ds.n_features();
        Ok(DatasetGram {
            ds,
            fk,
            proj: vec![0.0; d],
            proj_comp: vec![0.0; d],
            mixed: vec![0.0; d],
            gram_passes: 0,
        })
    }
}

/// Accumulate `proj += R^T v` with a per-component compensation array, so each
/// feature's sum over N samples is Kahan-compensated.
fn project_rows(ds: &Dataset, v: &[f64], proj: &mut [f64], comp: &mut [f64]) {
    proj.fill(0.0);
    comp.fill(0.0);
    let d = ds.n_features();
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0.0 {
            continue;
        }
        let row = ds.row(i);
        for x in 0..d {
            let y = vi * row[x] - comp[x];
            let t = proj[x] + y;
            comp[x] = (t - proj[x]) - y;
            proj[x] = t;
        }
    }
}

impl GramAction for DatasetGram<'_> {
    fn operand_len(&self) -> usize {
        self.ds.n_samples()
    }

    fn gram_into(&mut self, v: &[f64], out: &mut [f64]) -> Result<()> {
        self.gram_passes += 1;
        project_rows(self.ds, v, &mut self.proj, &mut self.proj_comp);
        self.fk.apply_into(&self.proj, &mut self.mixed)?;
        for (i, oi) in out.iter_mut().enumerate() {
            *oi = accum::dot(self.ds.row(i), &self.mixed);
        }
        Ok(())
    }

    fn norm_weights(&mut self) -> Result<&[f64]> {
        Ok(self.ds.squared_norms())
    }
}

/// `out = R2-like action on v`: `-2 G v` plus, when requested, the rank-two
/// norm part `w[i] * sum(v) + <w, v>`.
pub(crate) fn sqdist_action(
    action: &mut dyn GramAction,
    v: &[f64],
    include_norm_terms: bool,
) -> Result<Vec<f64>> {
    let n = action.operand_len();
    if v.len() != n {
        return Err(Error::invalid(format!(
            "vector length {} does not match operator size {n}",
            v.len()
        )));
    }
    let mut out = vec![0.0f64; n];
    action.gram_into(v, &mut out)?;
    if include_norm_terms {
        let weights = action.norm_weights()?;
        let total: f64 = accum::sum(v);
        let mixed: f64 = accum::dot(weights, v);
        for (oi, &wi) in out.iter_mut().zip(weights) {
            *oi = wi * total + mixed - 2.0 * *oi;
        }
    } else {
        for oi in out.iter_mut() {
            *oi = -2.0 * *oi;
        }
    }
    Ok(out)
}

/// Full truncated-series action through a Gram implementation.
pub(crate) fn series_action(
    action: &mut dyn GramAction,
    cfg: &KernelConfig,
    v: &[f64],
) -> Result<Vec<f64>> {
    let cfg = cfg.validated()?;
    let n = action.operand_len();
    if v.len() != n {
        return Err(Error::invalid(format!(
            "vector length {} does not match operator size {n}",
            v.len()
        )));
    }
    let order = cfg.series_order;
    let sig_sq = cfg.sigma * cfg.sigma;
    let check = |w: &[f64], stage: &str| -> Result<()> {
        if w.iter().any(|x| !x.is_finite()) {
            Err(Error::NonFinite(format!("kernel series at {stage}")))
        } else {
            Ok(())
        }
    };
    match cfg.series_form {
        SeriesMode::EulerStep => {
            let scale = 1.0 / (order as f64 * sig_sq);
            let mut w = v.to_vec();
            for step in 1..=order {
                let sq = sqdist_action(action, &w, cfg.include_norm_terms)?;
                for (wi, qi) in w.iter_mut().zip(&sq) {
                    *wi -= scale * qi;
                }
                check(&w, &format!("euler step {step}/{order}"))?;
            }
            Ok(w)
        }
        SeriesMode::Taylor => {
            // Horner over c_k = (-1)^k / k!: w <- (R2/sigma^2) w + c_j v.
            let mut coeffs = vec![0.0f64; order + 1];
            let mut fact = 1.0f64;
            for (k, ck) in coeffs.iter_mut().enumerate() {
                if k > 0 {
                    fact *= k as f64;
                }
                *ck = if k % 2 == 0 { 1.0 / fact } else { -1.0 / fact };
            }
            let mut w: Vec<f64> = v.iter().map(|&x| coeffs[order] * x).collect();
            for j in (0..order).rev() {
                let sq = sqdist_action(action, &w, cfg.include_norm_terms)?;
                for ((wi, qi), &vi) in w.iter_mut().zip(&sq).zip(v) {
                    *wi = qi / sig_sq + coeffs[j] * vi;
                }
                check(&w, &format!("horner stage {j}"))?;
            }
            Ok(w)
        }
    }
}

/// `(R2) * v` through the separable identity, never forming the matrix.
pub fn sqdist_matvec(ds: &Dataset, v: &[f64]) -> Result<Vec<f64>> {
    let fk = FeatureKernel::identity(ds.n_features());
    let mut action = DatasetGram::new(ds, &fk)?;
    sqdist_action(&mut action, v, true)
}

/// One Euler step `v - R2 * v / (n * sigma^2)` with `n = cfg.series_order`;
/// with `include_norm_terms = false` the rank-two part is dropped, leaving
/// `v + 2 R (R^T v) / (n * sigma^2)`.
pub fn euler_step_matvec(ds: &Dataset, cfg: &KernelConfig, v: &[f64]) -> Result<Vec<f64>> {
    let cfg = cfg.validated()?;
    let fk = FeatureKernel::identity(ds.n_features());
    let mut action = DatasetGram::new(ds, &fk)?;
    let sq = sqdist_action(&mut action, v, cfg.include_norm_terms)?;
    let scale = 1.0 / (cfg.series_order as f64 * cfg.sigma * cfg.sigma);
    Ok(v.iter().zip(&sq).map(|(&vi, &qi)| vi - scale * qi).collect())
}

/// Plain Gram product `R k (R^T v)` with the feature kernel inserted between
/// the two data passes.
pub fn gram_matvec(ds: &Dataset, fk: &FeatureKernel, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != ds.n_samples() {
        return Err(Error::invalid(format!(
            "vector length {} does not match {} samples",
            v.len(),
            ds.n_samples()
        )));
    }
    let mut action = DatasetGram::new(ds, fk)?;
    let mut out = vec![0.0f64; v.len()];
    action.gram_into(v, &mut out)?;
    Ok(out)
}

/// Truncated-series kernel operator times a vector: the production matvec.
pub fn kernel_matvec(
    ds: &Dataset,
    cfg: &KernelConfig,
    fk: &FeatureKernel,
    v: &[f64],
) -> Result<Vec<f64>> {
    let mut action = DatasetGram::new(ds, fk)?;
    series_action(&mut action, cfg, v)
}

/// Which dense reference to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleForm {
    /// Pointwise Gaussian `exp(-R2[i][j] / sigma^2)` — the classical kernel
    /// matrix, for reference only; no matvec path computes this.
    ElementwiseGaussian,
    /// The exact matrix the truncated-series matvec applies.
    MatrixSeries,
}

/// Explicit N x N kernel matrix for verification, refused for `N > cap` so
/// tests cannot accidentally depend on quadratic work at scale.
pub fn dense_kernel_oracle_capped(
    ds: &Dataset,
    cfg: &KernelConfig,
    fk: &FeatureKernel,
    form: OracleForm,
    cap: usize,
) -> Result<DMatrix<f64>> {
    let cfg = cfg.validated()?;
    let n = ds.n_samples();
    if n > cap {
        return Err(Error::invalid(format!(
            "dense oracle refused for N = {n} (cap {cap}): quadratic work is test-only"
        )));
    }
    if fk.dim() != ds.n_features() {
        return Err(Error::invalid(format!(
            "feature kernel dimension {} does not match {} dataset features",
            fk.dim(),
            ds.n_features()
        )));
    }
    // Mixed rows k * r_j, then G[i][j] = <r_i, k r_j>.
    let d = ds.n_features();
    let mut mixed = vec![0.0f64; n * d];
    for j in 0..n {
        let out = fk.apply(ds.row(j))?;
        mixed[j * d..(j + 1) * d].copy_from_slice(&out);
    }
    let gram = DMatrix::from_fn(n, n, |i, j| accum::dot(ds.row(i), &mixed[j * d..(j + 1) * d]));
    let s = ds.squared_norms();
    let sig_sq = cfg.sigma * cfg.sigma;
    match form {
        OracleForm::ElementwiseGaussian => Ok(DMatrix::from_fn(n, n, |i, j| {
            let r2 = s[i] + s[j] - 2.0 * gram[(i, j)];
            (-r2 / sig_sq).exp()
        })),
        OracleForm::MatrixSeries => {
            let a = DMatrix::from_fn(n, n, |i, j| {
                let norm_part = if cfg.include_norm_terms { s[i] + s[j] } else { 0.0 };
                (norm_part - 2.0 * gram[(i, j)]) / sig_sq
            });
            let order = cfg.series_order;
            Ok(match cfg.series_form {
                SeriesMode::EulerStep => {
                    let b = DMatrix::identity(n, n) - &a / order as f64;
                    dmatrix_pow(&b, order)
                }
                SeriesMode::Taylor => {
                    let mut coeffs = vec![0.0f64; order + 1];
                    let mut fact = 1.0f64;
                    for (k, ck) in coeffs.iter_mut().enumerate() {
                        if k > 0 {
                            fact *= k as f64;
                        }
                        *ck = if k % 2 == 0 { 1.0 / fact } else { -1.0 / fact };
                    }
                    let mut acc = DMatrix::identity(n, n) * coeffs[order];
                    for j in (0..order).rev() {
                        acc = &a * acc + DMatrix::identity(n, n) * coeffs[j];
                    }
                    acc
                }
            })
        }
    }
}

/// [`dense_kernel_oracle_capped`] at the default cap.
pub fn dense_kernel_oracle(
    ds: &Dataset,
    cfg: &KernelConfig,
    fk: &FeatureKernel,
    form: OracleForm,
) -> Result<DMatrix<f64>> {
    dense_kernel_oracle_capped(ds, cfg, fk, form, DENSE_ORACLE_CAP)
}

/// Binary exponentiation for small dense matrices.
fn dmatrix_pow(b: &DMatrix<f64>, mut e: usize) -> DMatrix<f64> {
    let mut base = b.clone();
    let mut acc = DMatrix::identity(b.nrows(), b.ncols());
    while e > 0 {
        if e & 1 == 1 {
            acc = &acc * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    acc
}

/// Number of subset samples used by the bandwidth heuristic.
pub const SIGMA_SUBSET: usize = 256;

/// Default bandwidth: the median pairwise distance over a seeded random
/// subset of at most [`SIGMA_SUBSET`] samples, computed densely on the
/// subset only.
pub fn median_pairwise_sigma(ds: &Dataset, seed: u64) -> Result<f64> {
    let idx = subset_indices(ds.n_samples(), SIGMA_SUBSET, seed);
    if idx.len() < 2 {
        return Err(Error::invalid(
            "bandwidth heuristic needs at least two samples",
        ));
    }
    let mut dists = Vec::with_capacity(idx.len() * (idx.len() - 1) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            dists.push(row_distance(ds, i, j));
        }
    }
    dists.sort_by(|a, b| a.total_cmp(b));
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        0.5 * (dists[mid - 1] + dists[mid])
    };
    if median <= 0.0 {
        return Err(Error::invalid(
            "median pairwise distance is zero; the dataset is too degenerate for an automatic bandwidth",
        ));
    }
    Ok(median)
}

/// The smallest `sigma^2` keeping every sample connected to the rest of the
/// graph at kernel level `tau`: the bottleneck edge of a Euclidean minimum
/// spanning tree, squared, divided by `ln(1/tau)`.  Datasets larger than the
/// subset cap are subsampled, making the result a diagnostic estimate.
pub fn min_connecting_sigma_sq(ds: &Dataset, tau: f64, seed: u64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid(format!(
            "connectivity level tau must lie in (0, 1), got {tau}"
        )));
    }
    let idx = subset_indices(ds.n_samples(), 512, seed);
    let m = idx.len();
    if m < 2 {
        return Err(Error::invalid("connectivity diagnostic needs at least two samples"));
    }
    // Prim's algorithm on the complete distance graph, tracking the largest
    // edge ever admitted to the tree (the bottleneck).
    let mut in_tree = vec![false; m];
    let mut best = vec![f64::INFINITY; m];
    in_tree[0] = true;
    for j in 1..m {
        best[j] = row_distance(ds, idx[0], idx[j]);
    }
    let mut bottleneck = 0.0f64;
    for _ in 1..m {
        let (next, &dist) = best
            .iter()
            .enumerate()
            .filter(|(j, _)| !in_tree[*j])
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("tree smaller than subset");
        in_tree[next] = true;
        bottleneck = bottleneck.max(dist);
        for j in 0..m {
            if !in_tree[j] {
                best[j] = best[j].min(row_distance(ds, idx[next], idx[j]));
            }
        }
    }
    Ok(bottleneck * bottleneck / (1.0 / tau).ln())
}

fn subset_indices(n: usize, cap: usize, seed: u64) -> Vec<usize> {
    if n <= cap {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, n, cap).into_vec();
        idx.sort_unstable();
        idx
    }
}

fn row_distance(ds: &Dataset, i: usize, j: usize) -> f64 {
    let (a, b) = (ds.row(i), ds.row(j));
    let mut acc = Kahan::new();
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        acc.add(d * d);
    }
    acc.value().sqrt()
}
