//! Kernels over the feature index set.
//!
//! A dataset row lives in R^D; a feature kernel is a symmetric linear map on
//! that space, inserted between the two Gram factors of every kernel matvec
//! so that pixel/feature similarity shapes the sample-sample kernel without
//! ever forming an N x N matrix.  Three implementations cover the useful
//! range: the identity (plain Gram), an explicit sparse symmetric matrix in
//! COO form, and the adjacency/Laplacian of a torus lattice over the features
//! applied axis by axis — the natural choice when features are pixels of an
//! image grid.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest D for which dense auxiliary work (connectivity BFS, densification)
/// is permitted; beyond this the operator is strictly matrix-free.
pub const DENSE_FEATURE_CAP: usize = 4096;

/// Symmetric sparse matrix in coordinate form.
///
/// Storage is fully symmetric: for every stored `(x, y, v)` the matching
/// `(y, x, v)` must also be stored, which the constructor verifies.  Apply
/// cost is O(nnz).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseCoo {
    dim: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseCoo {
    /// Build from triplet vectors, validating index range, finiteness, and
    /// pattern symmetry.
    pub fn new(dim: usize, rows: Vec<usize>, cols: Vec<usize>, vals: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("sparse kernel dimension must be positive"));
        }
        if rows.len() != cols.len() || rows.len() != vals.len() {
            return Err(Error::invalid(format!(
                "triplet vectors disagree in length: {} rows, {} cols, {} vals",
                rows.len(),
                cols.len(),
                vals.len()
            )));
        }
        for (k, (&r, &c)) in rows.iter().zip(&cols).enumerate() {
            if r >= dim || c >= dim {
                return Err(Error::invalid(format!(
                    "entry {k} indexes ({r}, {c}) outside dimension {dim}"
                )));
            }
        }
        if let Some(k) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sparse kernel value at entry {k}")));
        }
        // Symmetry: sorting (r, c, bits(v)) and (c, r, bits(v)) must give the
        // same multiset, i.e. every entry has its exact mirror.
        let mut fwd: Vec<(usize, usize, u64)> = rows
            .iter()
            .zip(&cols)
            .zip(&vals)
            .map(|((&r, &c), &v)| (r, c, v.to_bits()))
            .collect();
        let mut rev: Vec<(usize, usize, u64)> = fwd.iter().map(|&(r, c, v)| (c, r, v)).collect();
        fwd.sort_unstable();
        rev.sort_unstable();
        if fwd != rev {
            return Err(Error::invalid(
                "sparse kernel is not symmetric: some (x, y, v) lacks a matching (y, x, v)",
            ));
        }
        Ok(SparseCoo {
            dim,
            rows,
            cols,
            vals,
        })
    }

    /// The D x D identity as explicit triplets.
    pub fn identity(dim: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..dim).collect();
        SparseCoo::new(dim, idx.clone(), idx, vec![1.0; dim])
    }

    /// A random `degree`-regular simple graph on `dim` nodes via the pairing
    /// model: each node contributes `degree` stubs, stubs are shuffled and
    /// paired, and draws containing self-loops or repeated edges are rejected
    /// wholesale and redrawn.
    ///
    /// Rejection makes simple draws exponentially rare as the degree grows
    /// (acceptance is roughly `exp(-(degree^2 - 1) / 4)` for large graphs),
    /// so this is practical for degrees up to about 7; beyond that the
    /// attempt cap may be exhausted and an error returned.
    pub fn random_regular(dim: usize, degree: usize, seed: u64) -> Result<Self> {
        if degree == 0 || degree >= dim {
            return Err(Error::invalid(format!(
                "degree {degree} must satisfy 1 <= degree < dim ({dim})"
            )));
        }
        if dim * degree % 2 != 0 {
            return Err(Error::invalid(format!(
                "no {degree}-regular graph on {dim} nodes: dim * degree must be even"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stubs: Vec<usize> = (0..dim).flat_map(|v| std::iter::repeat(v).take(degree)).collect();
        // Attempts are cheap (one shuffle plus a hash pass), and acceptance
        // for degree 6 is only ~1.6e-4, so the cap must be generous.
        'attempt: for _ in 0..100_000 {
            stubs.shuffle(&mut rng);
            let mut seen = HashSet::with_capacity(dim * degree / 2);
            for pair in stubs.chunks_exact(2) {
                let (a, b) = (pair[0], pair[1]);
                if a == b || !seen.insert((a.min(b), a.max(b))) {
                    continue 'attempt;
                }
            }
            let mut rows = Vec::with_capacity(dim * degree);
            let mut cols = Vec::with_capacity(dim * degree);
            for &(a, b) in &seen {
                rows.push(a);
                cols.push(b);
                rows.push(b);
                cols.push(a);
            }
            let vals = vec![1.0; rows.len()];
            let coo = SparseCoo::new(dim, rows, cols, vals)?;
            debug_assert!((0..dim).all(|v| {
                coo.rows.iter().filter(|&&r| r == v).count() == degree
            }));
            return Ok(coo);
        }
        Err(Error::invalid(format!(
            "pairing model failed to produce a simple {degree}-regular graph on {dim} nodes"
        )))
    }

    /// Parse the text format: one `x y value` triple per line, whitespace
    /// separated, `#` starts a comment.  The dimension is inferred as the
    /// largest index plus one.
    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let err = |line: usize, reason: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            reason,
        };
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(err(
                    line_no,
                    format!("expected \"x y value\", found {} fields", fields.len()),
                ));
            }
            let x: usize = fields[0]
                .parse()
                .map_err(|_| err(line_no, format!("bad row index {:?}", fields[0])))?;
            let y: usize = fields[1]
                .parse()
                .map_err(|_| err(line_no, format!("bad column index {:?}", fields[1])))?;
            let v: f64 = fields[2]
                .parse()
                .map_err(|_| err(line_no, format!("bad value {:?}", fields[2])))?;
            rows.push(x);
            cols.push(y);
            vals.push(v);
        }
        if rows.is_empty() {
            return Err(err(0, "no entries".to_string()));
        }
        let dim = rows.iter().chain(&cols).max().unwrap() + 1;
        SparseCoo::new(dim, rows, cols, vals)
    }

    /// Read [`SparseCoo::from_text`] input from a file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SparseCoo::from_text(&text, path)
    }

    /// Dimension D.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored entries (mirrored entries count twice).
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    fn apply_into(&self, w: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
            out[r] += v * w[c];
        }
    }
}

/// Which lattice operator to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatticeForm {
    /// Adjacency of the torus: Kronecker sum of cycle adjacencies.
    Adjacency,
    /// Graph Laplacian `2d * I - A` (positive semi-definite convention).
    Laplacian,
}

/// A d-dimensional torus lattice over the features: axis `a` is a cycle graph
/// on `axis_sizes[a]` nodes and the full graph is their Kronecker-sum product,
/// so every node has degree `2d`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeSpec {
    axis_sizes: Vec<usize>,
    form: LatticeForm,
}

impl LatticeSpec {
    /// Validate axis sizes (each >= 3 so the cycle has distinct neighbors).
    pub fn new(axis_sizes: Vec<usize>, form: LatticeForm) -> Result<Self> {
        if axis_sizes.is_empty() {
            return Err(Error::invalid("lattice needs at least one axis"));
        }
        if let Some(&bad) = axis_sizes.iter().find(|&&n| n < 3) {
            return Err(Error::invalid(format!(
                "cycle axis of size {bad} is degenerate; every axis must be >= 3"
            )));
        }
        Ok(LatticeSpec { axis_sizes, form })
    }

    /// Total dimension D = product of axis sizes.
    pub fn dim(&self) -> usize {
        self.axis_sizes.iter().product()
    }

    /// Axis sizes `[n_1, ..., n_d]`.
    pub fn axis_sizes(&self) -> &[usize] {
        &self.axis_sizes
    }

    /// Operator form.
    pub fn form(&self) -> LatticeForm {
        self.form
    }
}

/// Adjacency matvec of the cycle graph C_n: each node sees the sum of its two
/// ring neighbors.
pub fn cycle_adjacency_apply(n: usize, w: &[f64]) -> Result<Vec<f64>> {
    if n < 3 {
        return Err(Error::invalid(format!("cycle graph needs n >= 3, got {n}")));
    }
    if w.len() != n {
        return Err(Error::invalid(format!(
            "vector length {} does not match cycle size {n}",
            w.len()
        )));
    }
    Ok((0..n)
        .map(|a| w[(a + n - 1) % n] + w[(a + 1) % n])
        .collect())
}

/// Apply the lattice operator to a flattened feature vector.
pub fn lattice_apply(spec: &LatticeSpec, w: &[f64]) -> Result<Vec<f64>> {
    lattice_apply_counted(spec, w).map(|(out, _)| out)
}

/// Like [`lattice_apply`] but also reports the number of multiply-add
/// operations performed, which is exactly `sum_a D * n_a`: the tensor is
/// reshaped per axis and each length-n_a fiber is contracted against the
/// dense n_a x n_a cycle adjacency, the axis-sequential scheme whose cost is
/// ~ d * D * D^(1/d) for equal axes.
pub fn lattice_apply_counted(spec: &LatticeSpec, w: &[f64]) -> Result<(Vec<f64>, u64)> {
    let d = spec.dim();
    if w.len() != d {
        return Err(Error::invalid(format!(
            "vector length {} does not match lattice dimension {d}",
            w.len()
        )));
    }
    let mut out = vec![0.0f64; d];
    let mut flops = 0u64;
    let mut inner: usize = d;
    let mut outer: usize = 1;
    for &n in &spec.axis_sizes {
        inner /= n;
        // Dense cycle adjacency for this axis.
        let mut m = vec![0.0f64; n * n];
        for a in 0..n {
            m[a * n + (a + n - 1) % n] = 1.0;
            m[a * n + (a + 1) % n] = 1.0;
        }
        let mut fiber = vec![0.0f64; n];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * n * inner + i;
                for (t, f) in fiber.iter_mut().enumerate() {
                    *f = w[base + t * inner];
                }
                for s in 0..n {
                    let row = &m[s * n..(s + 1) * n];
                    let mut acc = 0.0;
                    for (t, &ft) in fiber.iter().enumerate() {
                        acc += row[t] * ft;
                    }
                    out[base + s * inner] += acc;
                }
            }
        }
        flops += (d as u64) * (n as u64);
        outer *= n;
    }
    if spec.form == LatticeForm::Laplacian {
        let deg = 2.0 * spec.axis_sizes.len() as f64;
        for (oi, &wi) in out.iter_mut().zip(w) {
            *oi = deg * wi - *oi;
        }
    }
    Ok((out, flops))
}

/// A symmetric linear operator on feature space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum FeatureKernel {
    /// No feature coupling: the plain Gram kernel.
    Identity { dim: usize },
    /// Explicit sparse symmetric matrix.
    Sparse(SparseCoo),
    /// Torus lattice adjacency or Laplacian, applied axis by axis.
    Lattice(LatticeSpec),
}

impl FeatureKernel {
    /// The identity on a D-dimensional feature space.
    pub fn identity(dim: usize) -> Self {
        FeatureKernel::Identity { dim }
    }

    /// Dimension D the kernel acts on.
    pub fn dim(&self) -> usize {
        match self {
            FeatureKernel::Identity { dim } => *dim,
            FeatureKernel::Sparse(coo) => coo.dim(),
            FeatureKernel::Lattice(spec) => spec.dim(),
        }
    }

    /// Apply the kernel to a feature vector.
    pub fn apply(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.dim() {
            return Err(Error::invalid(format!(
                "vector length {} does not match feature kernel dimension {}",
                w.len(),
                self.dim()
            )));
        }
        let mut out = vec![0.0f64; w.len()];
        self.apply_into(w, &mut out)?;
        Ok(out)
    }

    /// Apply into a caller-provided buffer (hot path of the kernel matvecs).
    pub(crate) fn apply_into(&self, w: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            FeatureKernel::Identity { .. } => out.copy_from_slice(w),
            FeatureKernel::Sparse(coo) => coo.apply_into(w, out),
            FeatureKernel::Lattice(spec) => {
                let (v, _) = lattice_apply_counted(spec, w)?;
                out.copy_from_slice(&v);
            }
        }
        Ok(())
    }

    /// Explicit D x D matrix, for oracle comparisons at small D.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let d = self.dim();
        if d > DENSE_FEATURE_CAP {
            return Err(Error::invalid(format!(
                "refusing to densify a feature kernel of dimension {d} (cap {DENSE_FEATURE_CAP})"
            )));
        }
        Ok(match self {
            FeatureKernel::Identity { dim } => DMatrix::identity(*dim, *dim),
            FeatureKernel::Sparse(coo) => {
                let mut m = DMatrix::zeros(d, d);
                for ((&r, &c), &v) in coo.rows.iter().zip(&coo.cols).zip(&coo.vals) {
                    m[(r, c)] += v;
                }
                m
            }
            FeatureKernel::Lattice(spec) => {
                let mut acc = DMatrix::zeros(d, d);
                for (a, _) in spec.axis_sizes.iter().enumerate() {
                    let mut term = DMatrix::identity(1, 1);
                    for (b, &nb) in spec.axis_sizes.iter().enumerate() {
                        let factor = if a == b {
                            let mut m = DMatrix::zeros(nb, nb);
                            for x in 0..nb {
                                m[(x, (x + nb - 1) % nb)] = 1.0;
                                m[(x, (x + 1) % nb)] = 1.0;
                            }
                            m
                        } else {
                            DMatrix::identity(nb, nb)
                        };
                        term = term.kronecker(&factor);
                    }
                    acc += term;
                }
                if spec.form == LatticeForm::Laplacian {
                    let deg = 2.0 * spec.axis_sizes.len() as f64;
                    acc = DMatrix::identity(d, d) * deg - acc;
                }
                acc
            }
        })
    }

    /// Whether the graph induced by nonzero off-diagonal couplings is
    /// connected.
    ///
    /// The lattice is connected analytically (a product of cycles).  The
    /// identity has no off-diagonal couplings at all, so for D > 1 it is
    /// disconnected by this definition.  Sparse kernels get a breadth-first
    /// search, refused above the dense cap.
    pub fn connectivity_check(&self) -> Result<bool> {
        match self {
            FeatureKernel::Lattice(_) => Ok(true),
            FeatureKernel::Identity { dim } => Ok(*dim == 1),
            FeatureKernel::Sparse(coo) => {
                if coo.dim() > DENSE_FEATURE_CAP {
                    return Err(Error::invalid(format!(
                        "connectivity check refused for dimension {} (cap {DENSE_FEATURE_CAP})",
                        coo.dim()
                    )));
                }
                let mut adj = vec![Vec::new(); coo.dim()];
                for ((&r, &c), &v) in coo.rows.iter().zip(&coo.cols).zip(&coo.vals) {
                    if r != c && v != 0.0 {
                        adj[r].push(c);
                    }
                }
                Ok(bfs_reaches_all(&adj))
            }
        }
    }
}

/// Breadth-first reachability from node 0 over an adjacency list.
fn bfs_reaches_all(adj: &[Vec<usize>]) -> bool {
    let n = adj.len();
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1usize;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == n
}
