//! Degree normalization and the symmetric diffusion operator.
//!
//! Out of the raw kernel operator `k` this module builds the object the
//! eigensolver actually sees.  Three layers, each matrix-free:
//!
//! 1. degree vector `D = k * ones` — one matvec, no row-sum loop over an
//!    explicit matrix;
//! 2. density normalization `kt = D^-alpha k D^-alpha` with the classical
//!    exponent `alpha` interpolating between a plain graph kernel (0) and a
//!    density-invariant one (1);
//! 3. the symmetric form `S = Dt^-1/2 kt Dt^-1/2` with `Dt` the degree of
//!    `kt`.
//!
//! `S` is similar to the Markov transition matrix `Dt^-1 kt`, so it has the
//! same eigenvalues while staying symmetric — which a Lanczos iteration
//! requires.  Markov eigenvectors are recovered from symmetric ones by an
//! elementwise `Dt^-1/2` rescale, offered as [`DiffusionOperator::recover_markov`].
//!
//! Building the operator costs exactly two matvecs (both degree vectors via
//! the ones-vector trick); applying it costs one kernel matvec plus O(N)
//! elementwise work.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::feature::FeatureKernel;
use crate::kernel::{self, KernelConfig};
use crate::nlsa::{self, ConvolutionSpec};

/// Everything needed to assemble the normalized operator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionConfig {
    /// Density-normalization exponent, in `[0, 1]`.
    pub alpha: f64,
    /// Base kernel series parameters.
    pub kernel: KernelConfig,
    /// Kernel over the feature space.
    pub feature_kernel: FeatureKernel,
    /// Optional window convolution; when present the operator acts on
    /// `M = N - c + 1` windows instead of N samples.
    pub convolution: Option<ConvolutionSpec>,
}

impl DiffusionConfig {
    fn validate(&self, ds: &Dataset) -> Result<usize> {
        if !self.alpha.is_finite() || !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!(
                "normalization exponent alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        self.kernel.validated()?;
        if self.feature_kernel.dim() != ds.n_features() {
            return Err(Error::invalid(format!(
                "feature kernel dimension {} does not match {} dataset features",
                self.feature_kernel.dim(),
                ds.n_features()
            )));
        }
        match &self.convolution {
            Some(spec) => spec.n_windows(ds.n_samples()),
            None => Ok(ds.n_samples()),
        }
    }
}

/// Degree vector of a symmetric operator via the ones-vector trick.
///
/// Any entry that is not strictly positive means the kernel graph is
/// disconnected at this bandwidth or a series truncation went negative;
/// either way the normalization downstream would divide by it, so this is a
/// hard error naming the first offending index.
pub fn degree_vector<F>(apply: F, size: usize) -> Result<Vec<f64>>
where
    F: FnOnce(&[f64]) -> Result<Vec<f64>>,
{
    let degree = apply(&vec![1.0; size])?;
    if degree.len() != size {
        return Err(Error::invalid(format!(
            "operator returned length {} for size {size}",
            degree.len()
        )));
    }
    for (i, &d) in degree.iter().enumerate() {
        if !d.is_finite() {
            return Err(Error::NonFinite(format!("degree entry {i}")));
        }
        if d <= 0.0 {
            return Err(Error::DegreeUnderflow {
                index: i,
                value: d,
                diagnostic: String::new(),
            });
        }
    }
    Ok(degree)
}

/// The assembled symmetric operator `S`, immutable once built.
#[derive(Debug)]
pub struct DiffusionOperator<'a> {
    ds: &'a Dataset,
    cfg: DiffusionConfig,
    size: usize,
    degree: Vec<f64>,
    inv_alpha_degree: Vec<f64>,
    second_degree: Vec<f64>,
    sym_scale: Vec<f64>,
}

impl<'a> DiffusionOperator<'a> {
    /// Assemble the operator: two degree matvecs, positivity checks, and the
    /// normalization scales.
    pub fn build(cfg: DiffusionConfig, ds: &'a Dataset) -> Result<Self> {
        let size = cfg.validate(ds)?;
        let raw = |v: &[f64]| raw_series_matvec(ds, &cfg, v);
        let degree = degree_vector(raw, size).map_err(|e| attach_bandwidth_hint(e, ds))?;
        let inv_alpha_degree: Vec<f64> = match cfg.alpha {
            a if a == 0.0 => vec![1.0; size],
            a if a == 1.0 => degree.iter().map(|&d| 1.0 / d).collect(),
            a => degree.iter().map(|&d| d.powf(-a)).collect(),
        };
        // Degree of the alpha-normalized kernel, again via one matvec:
        // Dt = Da . (k (Da . ones)) with Da = D^-alpha.
        let kd = raw_series_matvec(ds, &cfg, &inv_alpha_degree)?;
        let second_degree: Vec<f64> = inv_alpha_degree
            .iter()
            .zip(&kd)
            .map(|(&a, &k)| a * k)
            .collect();
        for (i, &d) in second_degree.iter().enumerate() {
            if !d.is_finite() {
                return Err(Error::NonFinite(format!("normalized degree entry {i}")));
            }
            if d <= 0.0 {
                return Err(attach_bandwidth_hint(
                    Error::DegreeUnderflow {
                        index: i,
                        value: d,
                        diagnostic: String::new(),
                    },
                    ds,
                ));
            }
        }
        let sym_scale: Vec<f64> = second_degree.iter().map(|&d| 1.0 / d.sqrt()).collect();
        Ok(DiffusionOperator {
            ds,
            cfg,
            size,
            degree,
            inv_alpha_degree,
            second_degree,
            sym_scale,
        })
    }

    /// Operand length: N samples, or `M = N - c + 1` windows when convolved.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Raw kernel degrees `D = k * ones`.
    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    /// Degrees of the alpha-normalized kernel, `Dt`.
    pub fn second_degree(&self) -> &[f64] {
        &self.second_degree
    }

    /// The configuration the operator was built from.
    pub fn config(&self) -> &DiffusionConfig {
        &self.cfg
    }

    /// Raw truncated-series kernel matvec (no normalization).
    pub fn raw_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        raw_series_matvec(self.ds, &self.cfg, v)
    }

    /// Density-normalized matvec `D^-alpha . k (D^-alpha . v)`.
    pub fn alpha_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        let scaled: Vec<f64> = v
            .iter()
            .zip(&self.inv_alpha_degree)
            .map(|(&x, &a)| x * a)
            .collect();
        let mut out = raw_series_matvec(self.ds, &self.cfg, &scaled)?;
        for (o, &a) in out.iter_mut().zip(&self.inv_alpha_degree) {
            *o *= a;
        }
        Ok(out)
    }

    /// The full symmetric operator: `S v = Dt^-1/2 . kt (Dt^-1/2 . v)`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        let scaled: Vec<f64> = v
            .iter()
            .zip(&self.sym_scale)
            .map(|(&x, &s)| x * s)
            .collect();
        let mut out = self.alpha_apply(&scaled)?;
        for (o, &s) in out.iter_mut().zip(&self.sym_scale) {
            *o *= s;
        }
        Ok(out)
    }

    /// Map an eigenvector of `S` to the corresponding eigenvector of the
    /// Markov matrix `Dt^-1 kt` (elementwise `Dt^-1/2` rescale; not
    /// renormalized).
    pub fn recover_markov(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.sym_scale)
            .map(|(&x, &s)| x * s)
            .collect()
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.size {
            return Err(Error::invalid(format!(
                "vector length {} does not match operator size {}",
                v.len(),
                self.size
            )));
        }
        Ok(())
    }
}

/// Dispatch to the plain or window-convolved series matvec.
fn raw_series_matvec(ds: &Dataset, cfg: &DiffusionConfig, v: &[f64]) -> Result<Vec<f64>> {
    match &cfg.convolution {
        Some(spec) => nlsa::convolved_series_matvec(ds, &cfg.kernel, &cfg.feature_kernel, spec, v),
        None => kernel::kernel_matvec(ds, &cfg.kernel, &cfg.feature_kernel, v),
    }
}

/// Extend a degree-underflow error with a concrete bandwidth suggestion
/// computed from the spanning-tree bottleneck of the dataset.
fn attach_bandwidth_hint(err: Error, ds: &Dataset) -> Error {
    match err {
        Error::DegreeUnderflow { index, value, .. } => {
            let diagnostic = match kernel::min_connecting_sigma_sq(ds, 1e-3, 0) {
                Ok(s2) => format!(
                    "; the kernel graph is disconnected at this bandwidth or the series went \
                     negative — try sigma^2 >= {s2:.3e} (sigma >= {:.3e}) or a higher even \
                     series order",
                    s2.sqrt()
                ),
                Err(_) => "; try a larger sigma or a higher even series order".to_string(),
            };
            Error::DegreeUnderflow {
                index,
                value,
                diagnostic,
            }
        }
        other => other,
    }
}
