//! Compensated accumulation primitives.
//!
//! Feature counts in the thousands mean dot products and row norms accumulate
//! thousands of terms; plain summation loses up to `D * eps` relative accuracy
//! while Kahan compensation keeps the error independent of length.  All hot
//! reductions in the crate go through these helpers, and every loop runs in a
//! fixed order, so results are bit-reproducible from run to run.

/// Running Kahan (compensated) sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    /// Start a fresh accumulator at zero.
    pub fn new() -> Self {
        Self::default()
    }

    /// Add one term, carrying the rounding error into the compensation slot.
    #[inline(always)]
    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    /// Current compensated total.
    #[inline(always)]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Compensated sum of a slice.
pub fn sum(xs: &[f64]) -> f64 {
    let mut acc = Kahan::new();
    for &x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Compensated dot product of two equal-length slices.
///
/// Panics in debug builds if the lengths differ; callers are expected to have
/// validated shapes already.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len(), "dot length mismatch");
    let mut acc = Kahan::new();
    for (&x, &y) in a.iter().zip(b) {
        acc.add(x * y);
    }
    acc.value()
}

/// Compensated squared Euclidean norm.
#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    let mut acc = Kahan::new();
    for &x in a {
        acc.add(x * x);
    }
    acc.value()
}

/// Euclidean norm via the compensated squared norm.
#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `y += alpha * x` over equal-length slices.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len(), "axpy length mismatch");
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Scale a vector in place.
#[inline]
pub fn scale(alpha: f64, y: &mut [f64]) {
    for yi in y.iter_mut() {
        *yi *= alpha;
    }
}
