//! Windowed kernel convolution for time-lagged (NLSA-style) embeddings.
//!
//! Concatenating `c` consecutive snapshots into one long sample and taking
//! the Gram kernel of the concatenated set is the classical way to make a
//! diffusion embedding respect temporal ordering.  The same kernel is,
//! entry for entry, a windowed convolution of the *original* kernel:
//!
//! ```text
//! K[I][J] = sum_{a, b} kappa[a][b] * k[I + a][J + b]
//! ```
//!
//! with `kappa` the identity for plain concatenation.  That identity lets us
//! apply the operator matrix-free: scatter the window vector into a length-N
//! buffer per column shift `b`, run one ordinary O(N*D) Gram matvec on it,
//! and gather the result with row shifts `a` — never building the
//! concatenated `c*D`-wide dataset, and paying one Gram pass per nonzero
//! column of `kappa` (so the NLSA diagonal case costs `c` passes).

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::feature::FeatureKernel;
use crate::kernel::{self, DatasetGram, GramAction, KernelConfig};

/// Window length and convolution weights for the windowed kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionSpec {
    window: usize,
    /// Row-major `window x window` weight matrix `kappa`.
    weights: Vec<f64>,
}

impl ConvolutionSpec {
    /// General symmetric weights; `weights` is row-major `c x c`.
    ///
    /// Symmetry (`kappa[a][b] == kappa[b][a]`, exactly) is required: it is
    /// what keeps the convolved operator symmetric, and every legitimate
    /// construction produces bit-equal mirror entries.
    pub fn new(window: usize, weights: Vec<f64>) -> Result<Self> {
        if window == 0 {
            return Err(Error::invalid("convolution window must be at least 1"));
        }
        if weights.len() != window * window {
            return Err(Error::invalid(format!(
                "weight matrix holds {} values, window {window} needs {}",
                weights.len(),
                window * window
            )));
        }
        if let Some(k) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFinite(format!(
                "convolution weight at ({}, {})",
                k / window,
                k % window
            )));
        }
        for a in 0..window {
            for b in (a + 1)..window {
                if weights[a * window + b] != weights[b * window + a] {
                    return Err(Error::invalid(format!(
                        "convolution weights are asymmetric at ({a}, {b}): {} vs {}",
                        weights[a * window + b],
                        weights[b * window + a]
                    )));
                }
            }
        }
        Ok(ConvolutionSpec { window, weights })
    }

    /// The pure-concatenation case: `kappa = I`, optionally scaled.
    pub fn identity(window: usize) -> Result<Self> {
        let mut weights = vec![0.0; window * window];
        for a in 0..window {
            weights[a * window + a] = 1.0;
        }
        ConvolutionSpec::new(window, weights)
    }

    /// Window length `c`.
    pub fn window(&self) -> usize {
        self.window
    }

    /// Weight `kappa[a][b]`.
    pub fn weight(&self, a: usize, b: usize) -> f64 {
        self.weights[a * self.window + b]
    }

    /// Number of stride-1 windows over `n` samples: `M = n - c + 1`.
    pub fn n_windows(&self, n_samples: usize) -> Result<usize> {
        if self.window > n_samples {
            return Err(Error::invalid(format!(
                "window {} exceeds sample count {n_samples}",
                self.window
            )));
        }
        Ok(n_samples - self.window + 1)
    }
}

/// The stride-1 window index sets: window `I` covers sample rows
/// `[I, I + c)`, for `I` in `[0, n - c + 1)`.
pub fn make_windows(n_samples: usize, window: usize) -> Result<Vec<Range<usize>>> {
    if window == 0 {
        return Err(Error::invalid("window must be at least 1"));
    }
    if window > n_samples {
        return Err(Error::invalid(format!(
            "window {window} exceeds sample count {n_samples}"
        )));
    }
    Ok((0..n_samples - window + 1).map(|i| i..i + window).collect())
}

/// Window-convolved Gram action over `M = N - c + 1` windows.
///
/// The norm weights it reports are the convolved squared norms
/// `p[I] = sum_a (sum_b kappa[a][b]) * s[I + a]`, which is exactly what the
/// rank-two part of the squared distance becomes under the same convolution
/// (and, for identity weights, the squared norm of the concatenated window
/// row).
pub(crate) struct ConvolvedGram<'a> {
    base: DatasetGram<'a>,
    spec: &'a ConvolutionSpec,
    n: usize,
    m: usize,
    padded: Vec<f64>,
    gram_full: Vec<f64>,
    norm_weights: Vec<f64>,
}

impl<'a> ConvolvedGram<'a> {
    pub(crate) fn new(
        ds: &'a Dataset,
        fk: &'a FeatureKernel,
        spec: &'a ConvolutionSpec,
    ) -> Result<Self> {
        let n = ds.n_samples();
        let m = spec.n_windows(n)?;
        let c = spec.window;
        let s = ds.squared_norms();
        let mut norm_weights = vec![0.0f64; m];
        for a in 0..c {
            let row_sum: f64 = (0..c).map(|b| spec.weight(a, b)).sum();
            if row_sum != 0.0 {
                for i in 0..m {
                    norm_weights[i] += row_sum * s[i + a];
                }
            }
        }
        Ok(ConvolvedGram {
            base: DatasetGram::new(ds, fk)?,
            spec,
            n,
            m,
            padded: vec![0.0; n],
            gram_full: vec![0.0; n],
            norm_weights,
        })
    }

    /// Number of full O(N*D) Gram passes performed so far; the structural
    /// cost counter behind the per-window-column scaling tests.
    #[cfg(test)]
    pub(crate) fn gram_passes(&self) -> u64 {
        self.base.gram_passes
    }
}

impl GramAction for ConvolvedGram<'_> {
    fn operand_len(&self) -> usize {
        self.m
    }

    fn gram_into(&mut self, v: &[f64], out: &mut [f64]) -> Result<()> {
        let c = self.spec.window;
        out.fill(0.0);
        for b in 0..c {
            if (0..c).all(|a| self.spec.weight(a, b) == 0.0) {
                continue;
            }
            // Scatter the window vector to sample positions shifted by b...
            self.padded.fill(0.0);
            for (j, &vj) in v.iter().enumerate() {
                self.padded[j + b] = vj;
            }
            // ...one ordinary Gram matvec on the padded vector...
            let (padded, gram_full) = (&self.padded, &mut self.gram_full);
            self.base.gram_into(padded, gram_full)?;
            // ...and gather with every row shift a that has weight.
            for a in 0..c {
                let w = self.spec.weight(a, b);
                if w == 0.0 {
                    continue;
                }
                for (i, oi) in out.iter_mut().enumerate() {
                    *oi += w * self.gram_full[i + a];
                }
            }
        }
        let _ = self.n;
        Ok(())
    }

    fn norm_weights(&mut self) -> Result<&[f64]> {
        Ok(&self.norm_weights)
    }
}

/// Convolved Gram matvec over windows: `out[I] = sum_{a,b} kappa[a][b] *
/// (Gram matvec with rows shifted by a on the left and b on the right)`.
///
/// With `c = 1`, `kappa = [[1]]` this reduces to the plain Gram matvec on the
/// original samples.
pub fn convolved_kernel_matvec(
    ds: &Dataset,
    fk: &FeatureKernel,
    spec: &ConvolutionSpec,
    v: &[f64],
) -> Result<Vec<f64>> {
    let mut action = ConvolvedGram::new(ds, fk, spec)?;
    if v.len() != action.operand_len() {
        return Err(Error::invalid(format!(
            "vector length {} does not match window count {}",
            v.len(),
            action.operand_len()
        )));
    }
    let mut out = vec![0.0f64; v.len()];
    action.gram_into(v, &mut out)?;
    Ok(out)
}

/// Full truncated-series kernel operator over the window-convolved Gram: the
/// windowed analogue of [`kernel::kernel_matvec`], and what the diffusion
/// operator applies when a convolution is configured.
pub fn convolved_series_matvec(
    ds: &Dataset,
    cfg: &KernelConfig,
    fk: &FeatureKernel,
    spec: &ConvolutionSpec,
    v: &[f64],
) -> Result<Vec<f64>> {
    let mut action = ConvolvedGram::new(ds, fk, spec)?;
    kernel::series_action(&mut action, cfg, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accum;
    use crate::kernel::{gram_matvec, kernel_matvec, SeriesMode};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * d).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        Dataset::new(data, n, d).unwrap()
    }

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect()
    }

    /// Rows [I, I+c) glued into one long row, for every stride-1 window.
    fn concatenated_dataset(ds: &Dataset, c: usize) -> Dataset {
        let n = ds.n_samples();
        let d = ds.n_features();
        let m = n - c + 1;
        let mut data = Vec::with_capacity(m * c * d);
        for i in 0..m {
            for a in 0..c {
                data.extend_from_slice(ds.row(i + a));
            }
        }
        Dataset::new(data, m, c * d).unwrap()
    }

    #[test]
    fn windows_enumerate_stride_one_ranges() {
        let w = make_windows(5, 1).unwrap();
        assert_eq!(w.len(), 5);
        assert!(w.iter().enumerate().all(|(i, r)| r.clone().eq(i..i + 1)));

        let w = make_windows(5, 5).unwrap();
        assert_eq!(w, vec![0..5]);

        let w = make_windows(10, 3).unwrap();
        assert_eq!(w.len(), 8);
        assert_eq!(w[2], 2..5);

        assert!(make_windows(4, 5).is_err());
        assert!(make_windows(4, 0).is_err());
    }

    #[test]
    fn trivial_window_reduces_to_plain_gram() {
        let ds = random_dataset(9, 4, 1);
        let fk = FeatureKernel::identity(4);
        let spec = ConvolutionSpec::identity(1).unwrap();
        let v = random_vec(9, 2);
        let conv = convolved_kernel_matvec(&ds, &fk, &spec, &v).unwrap();
        let plain = gram_matvec(&ds, &fk, &v).unwrap();
        assert_eq!(conv, plain, "c = 1 with unit weight must be the plain Gram");
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let ds = random_dataset(10, 3, 3);
        let fk = FeatureKernel::identity(3);
        let spec = ConvolutionSpec::new(3, vec![0.0; 9]).unwrap();
        let v = random_vec(8, 4);
        let out = convolved_kernel_matvec(&ds, &fk, &spec, &v).unwrap();
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn identity_weights_match_concatenated_snapshot_gram() {
        let ds = random_dataset(10, 3, 5);
        let fk = FeatureKernel::identity(3);
        let spec = ConvolutionSpec::identity(3).unwrap();
        let v = random_vec(8, 6);
        let got = convolved_kernel_matvec(&ds, &fk, &spec, &v).unwrap();

        let concat = concatenated_dataset(&ds, 3);
        let fk_wide = FeatureKernel::identity(9);
        let want = gram_matvec(&concat, &fk_wide, &v).unwrap();
        for i in 0..8 {
            assert!(
                (got[i] - want[i]).abs() <= 1e-11 * want[i].abs().max(1.0),
                "window {i}: convolved {} vs concatenated {}",
                got[i],
                want[i]
            );
        }
    }

    #[test]
    fn general_weights_match_direct_shifted_sum() {
        // Independent oracle: densify the base Gram and sum kappa-weighted
        // shifted blocks entry by entry.
        let ds = random_dataset(12, 4, 7);
        let fk = FeatureKernel::identity(4);
        let c = 2;
        let spec = ConvolutionSpec::new(c, vec![0.5, -0.2, -0.2, 1.5]).unwrap();
        let m = 11;
        let n = 12;
        let mut gram = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..n {
                gram[i * n + j] = accum::dot(ds.row(i), ds.row(j));
            }
        }
        let v = random_vec(m, 8);
        let mut want = vec![0.0f64; m];
        for i in 0..m {
            for j in 0..m {
                let mut k_ij = 0.0;
                for a in 0..c {
                    for b in 0..c {
                        k_ij += spec.weight(a, b) * gram[(i + a) * n + (j + b)];
                    }
                }
                want[i] += k_ij * v[j];
            }
        }
        let got = convolved_kernel_matvec(&ds, &fk, &spec, &v).unwrap();
        for i in 0..m {
            assert!(
                (got[i] - want[i]).abs() <= 1e-11 * want[i].abs().max(1.0),
                "entry {i}: {} vs {}",
                got[i],
                want[i]
            );
        }
    }

    #[test]
    fn convolved_operator_is_symmetric() {
        let ds = random_dataset(14, 3, 9);
        let fk = FeatureKernel::identity(3);
        let spec = ConvolutionSpec::new(3, vec![1.0, 0.3, 0.0, 0.3, 1.0, 0.3, 0.0, 0.3, 1.0]).unwrap();
        let m = spec.n_windows(14).unwrap();
        for trial in 0..20 {
            let u = random_vec(m, 100 + trial);
            let v = random_vec(m, 200 + trial);
            let ku = convolved_kernel_matvec(&ds, &fk, &spec, &u).unwrap();
            let kv = convolved_kernel_matvec(&ds, &fk, &spec, &v).unwrap();
            let lhs = accum::dot(&u, &kv);
            let rhs = accum::dot(&ku, &v);
            assert!(
                (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1.0),
                "trial {trial}: <u, Kv> = {lhs}, <Ku, v> = {rhs}"
            );
        }
    }

    #[test]
    fn full_series_matches_series_on_concatenated_dataset() {
        // The end-to-end claim: running the truncated-series kernel through
        // the convolved Gram equals running it on explicitly concatenated
        // snapshots, norm terms included.
        let ds = random_dataset(12, 3, 10);
        let c = 3;
        let fk = FeatureKernel::identity(3);
        let spec = ConvolutionSpec::identity(c).unwrap();
        for form in [SeriesMode::EulerStep, SeriesMode::Taylor] {
            let cfg = KernelConfig {
                sigma: 2.0,
                series_order: 2,
                include_norm_terms: true,
                series_form: form,
            };
            let m = spec.n_windows(12).unwrap();
            let v = random_vec(m, 11);
            let got = convolved_series_matvec(&ds, &cfg, &fk, &spec, &v).unwrap();
            let concat = concatenated_dataset(&ds, c);
            let fk_wide = FeatureKernel::identity(3 * c);
            let want = kernel_matvec(&concat, &cfg, &fk_wide, &v).unwrap();
            for i in 0..m {
                assert!(
                    (got[i] - want[i]).abs() <= 1e-10 * want[i].abs().max(1.0),
                    "{form:?} entry {i}: windowed {} vs concatenated {}",
                    got[i],
                    want[i]
                );
            }
        }
    }

    #[test]
    fn gram_pass_count_tracks_nonzero_columns() {
        // Cost bookkeeping: one O(N*D) pass per nonzero kappa column, so the
        // NLSA diagonal costs c passes and sparse kappa costs less.
        let ds = random_dataset(16, 3, 12);
        let fk = FeatureKernel::identity(3);
        for c in [1usize, 2, 4, 8] {
            let spec = ConvolutionSpec::identity(c).unwrap();
            let mut action = ConvolvedGram::new(&ds, &fk, &spec).unwrap();
            let m = spec.n_windows(16).unwrap();
            let v = random_vec(m, 13);
            let mut out = vec![0.0; m];
            action.gram_into(&v, &mut out).unwrap();
            assert_eq!(
                action.gram_passes(),
                c as u64,
                "identity kappa of window {c} must cost exactly {c} Gram passes"
            );
        }
        // A kappa with one zero column skips that pass.
        let spec = ConvolutionSpec::new(2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let mut action = ConvolvedGram::new(&ds, &fk, &spec).unwrap();
        let v = random_vec(15, 14);
        let mut out = vec![0.0; 15];
        action.gram_into(&v, &mut out).unwrap();
        assert_eq!(action.gram_passes(), 1);
    }

    #[test]
    fn spec_validation_rejects_bad_weights() {
        assert!(matches!(
            ConvolutionSpec::new(2, vec![1.0, 0.5, 0.4, 1.0]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(ConvolutionSpec::new(0, vec![]).is_err());
        assert!(ConvolutionSpec::new(2, vec![1.0; 3]).is_err());
        assert!(ConvolutionSpec::new(1, vec![f64::NAN]).is_err());
        let spec = ConvolutionSpec::identity(5).unwrap();
        assert!(spec.n_windows(4).is_err());
        assert_eq!(spec.n_windows(5).unwrap(), 1);
    }

    #[test]
    fn convolved_norm_weights_match_concatenated_norms() {
        let ds = random_dataset(9, 4, 15);
        let fk = FeatureKernel::identity(4);
        let spec = ConvolutionSpec::identity(4).unwrap();
        let mut action = ConvolvedGram::new(&ds, &fk, &spec).unwrap();
        let concat = concatenated_dataset(&ds, 4);
        let want = concat.squared_norms();
        let got = action.norm_weights().unwrap();
        for i in 0..got.len() {
            assert!(
                (got[i] - want[i]).abs() <= 1e-11 * want[i].max(1.0),
                "window norm {i}: {} vs {}",
                got[i],
                want[i]
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn window_count_and_coverage(n in 1usize..40, c in 1usize..10) {
            prop_assume!(c <= n);
            let w = make_windows(n, c).unwrap();
            prop_assert_eq!(w.len(), n - c + 1);
            prop_assert!(w.iter().all(|r| r.end - r.start == c && r.end <= n));
        }

        #[test]
        fn convolution_is_symmetric_for_random_symmetric_kappa(
            seed in 0u64..300,
            c in 1usize..4,
        ) {
            let ds = random_dataset(10, 3, seed);
            let fk = FeatureKernel::identity(3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(7));
            let mut weights = vec![0.0f64; c * c];
            for a in 0..c {
                for b in a..c {
                    let w = rng.gen::<f64>() - 0.5;
                    weights[a * c + b] = w;
                    weights[b * c + a] = w;
                }
            }
            let spec = ConvolutionSpec::new(c, weights).unwrap();
            let m = spec.n_windows(10).unwrap();
            let u = random_vec(m, seed.wrapping_add(1000));
            let v = random_vec(m, seed.wrapping_add(2000));
            let ku = convolved_kernel_matvec(&ds, &fk, &spec, &u).unwrap();
            let kv = convolved_kernel_matvec(&ds, &fk, &spec, &v).unwrap();
            let lhs = accum::dot(&u, &kv);
            let rhs = accum::dot(&ku, &v);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1.0));
        }
    }
}
