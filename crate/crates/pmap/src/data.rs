//! Dataset container, binary/CSV input, and the rotated-icon generator.
//!
//! The generator exists so every other module has a dataset with a *known*
//! low-dimensional structure to recover: a fixed P x P grayscale icon rotated
//! to N random angles gives N points in R^(P*P) that live on a closed curve
//! parameterized by the rotation angle.  An embedding method that works should
//! map those points back onto a circle.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::accum;
use crate::error::{Error, Result};

/// Magic bytes opening the binary dataset format.
pub const MAGIC: [u8; 4] = *b"PMAP";
/// Current binary format version.
pub const FORMAT_VERSION: u32 = 1;

/// An N x D row-major matrix of samples, immutable after construction.
///
/// Every entry is guaranteed finite.  Squared row norms are computed lazily
/// and cached, since several operators need them repeatedly.
#[derive(Debug)]
pub struct Dataset {
    data: Vec<f64>,
    n_samples: usize,
    n_features: usize,
    sq_norms: OnceLock<Vec<f64>>,
}

impl Clone for Dataset {
    fn clone(&self) -> Self {
        let out = Dataset {
            data: self.data.clone(),
            n_samples: self.n_samples,
            n_features: self.n_features,
            sq_norms: OnceLock::new(),
        };
        if let Some(cached) = self.sq_norms.get() {
            let _ = out.sq_norms.set(cached.clone());
        }
        out
    }
}

impl Dataset {
    /// Wrap a row-major buffer, validating shape and finiteness.
    pub fn new(data: Vec<f64>, n_samples: usize, n_features: usize) -> Result<Self> {
        if n_samples == 0 || n_features == 0 {
            return Err(Error::invalid(format!(
                "dataset shape {n_samples} x {n_features} must be nonempty"
            )));
        }
        if data.len() != n_samples * n_features {
            return Err(Error::invalid(format!(
                "buffer holds {} values, shape {n_samples} x {n_features} needs {}",
                data.len(),
                n_samples * n_features
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "dataset entry at row {}, column {}",
                pos / n_features,
                pos % n_features
            )));
        }
        Ok(Dataset {
            data,
            n_samples,
            n_features,
            sq_norms: OnceLock::new(),
        })
    }

    /// Number of samples (rows).
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Number of features (columns).
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// The full row-major buffer.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// One sample as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_features..(i + 1) * self.n_features]
    }

    /// Squared Euclidean norm of every row, compensated summation, cached
    /// after the first call.
    pub fn squared_norms(&self) -> &[f64] {
        self.sq_norms.get_or_init(|| {
            (0..self.n_samples)
                .map(|i| accum::norm_sq(self.row(i)))
                .collect()
        })
    }

    /// A copy with every row scaled to unit Euclidean norm.
    ///
    /// Rows of zero norm cannot be normalized and are reported as errors.
    pub fn normalize_rows(&self) -> Result<Dataset> {
        let mut data = Vec::with_capacity(self.data.len());
        for i in 0..self.n_samples {
            let row = self.row(i);
            let nrm = accum::norm(row);
            if nrm == 0.0 {
                return Err(Error::invalid(format!(
                    "row {i} has zero norm and cannot be scaled to unit length"
                )));
            }
            let inv = 1.0 / nrm;
            data.extend(row.iter().map(|&x| x * inv));
        }
        let out = Dataset::new(data, self.n_samples, self.n_features)?;
        // After scaling, the squared norms are 1 by construction.
        let _ = out.sq_norms.set(vec![1.0; self.n_samples]);
        Ok(out)
    }

    /// Write the dataset in the binary container format: `PMAP` magic,
    /// little-endian u32 version / sample count / feature count, then the
    /// row-major payload as little-endian f64.  Loading the file back yields
    /// bit-identical values.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut emit = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
        emit(&MAGIC)?;
        emit(&FORMAT_VERSION.to_le_bytes())?;
        emit(&(self.n_samples as u32).to_le_bytes())?;
        emit(&(self.n_features as u32).to_le_bytes())?;
        for &x in &self.data {
            emit(&x.to_le_bytes())?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Read a dataset written by [`Dataset::save`], validating magic, version,
    /// and exact payload length.
    pub fn load(path: &Path) -> Result<Dataset> {
        let malformed = |reason: &str| Error::MalformedDataset {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut header = [0u8; 16];
        r.read_exact(&mut header)
            .map_err(|_| malformed("file shorter than the 16-byte header"))?;
        if header[0..4] != MAGIC {
            return Err(malformed("bad magic bytes (expected \"PMAP\")"));
        }
        let word = |off: usize| u32::from_le_bytes(header[off..off + 4].try_into().unwrap());
        let version = word(4);
        if version != FORMAT_VERSION {
            return Err(malformed(&format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let n = word(8) as usize;
        let d = word(12) as usize;
        if n == 0 || d == 0 {
            return Err(malformed("zero sample or feature count in header"));
        }
        let expected = n
            .checked_mul(d)
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| malformed("header shape overflows"))?;
        let mut payload = Vec::new();
        r.read_to_end(&mut payload).map_err(|e| Error::io(path, e))?;
        if payload.len() != expected {
            return Err(malformed(&format!(
                "payload holds {} bytes, header shape {n} x {d} needs {expected}",
                payload.len()
            )));
        }
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Dataset::new(data, n, d)
    }

    /// Import comma-separated text: one sample per line, `#` starts a comment,
    /// blank lines ignored.  Every data line must have the same field count.
    pub fn from_csv(path: &Path) -> Result<Dataset> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let mut data = Vec::new();
        let mut n_features = None;
        let mut n_samples = 0usize;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut count = 0usize;
            for field in line.split(',') {
                let field = field.trim();
                let value: f64 = field
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("cannot parse {field:?} as a number")))?;
                if !value.is_finite() {
                    return Err(parse_err(line_no, format!("non-finite value {field:?}")));
                }
                data.push(value);
                count += 1;
            }
            match n_features {
                None => n_features = Some(count),
                Some(d) if d != count => {
                    return Err(parse_err(
                        line_no,
                        format!("row has {count} fields, previous rows had {d}"),
                    ));
                }
                Some(_) => {}
            }
            n_samples += 1;
        }
        let d = n_features.ok_or_else(|| parse_err(0, "no data rows".to_string()))?;
        Dataset::new(data, n_samples, d)
    }
}

/// A square grayscale image with values in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct IconImage {
    pixels: Vec<f64>,
    side: usize,
}

impl IconImage {
    /// Wrap a pixel buffer, validating shape and the `[0, 1]` range.
    pub fn new(pixels: Vec<f64>, side: usize) -> Result<Self> {
        if side < 3 {
            return Err(Error::invalid(format!("icon side {side} must be >= 3")));
        }
        if pixels.len() != side * side {
            return Err(Error::invalid(format!(
                "pixel buffer holds {} values, side {side} needs {}",
                pixels.len(),
                side * side
            )));
        }
        if pixels.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::invalid(
                "icon pixel outside [0, 1] (or non-finite)".to_string(),
            ));
        }
        Ok(IconImage { pixels, side })
    }

    /// Side length in pixels.
    pub fn side(&self) -> usize {
        self.side
    }

    /// Flat row-major pixel buffer.
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }
}

/// A dataset of rotated icon copies together with the angles that produced it.
#[derive(Debug, Clone)]
pub struct RotationSet {
    /// One flattened rotated image per row.
    pub dataset: Dataset,
    /// Rotation angle of each row, radians in `[0, 2*pi)`.
    pub angles: Vec<f64>,
}

/// Generate a deterministic test icon: a dominant off-center blob, a few
/// weaker random blobs, and a faint gradient, min-max scaled into `[0, 1]`.
///
/// The dominant blob guarantees the image shares no symmetry with its own
/// quarter-turn rotations — verified here, because a symmetric icon would make
/// distinct rotation angles produce identical samples and the circular
/// structure of a rotation dataset would degenerate.
pub fn generate_icon(side: usize, seed: u64) -> Result<IconImage> {
    if side < 3 {
        return Err(Error::invalid(format!("icon side {side} must be >= 3")));
    }
    // A seed whose icon comes out too symmetric is salted and retried; the
    // dominant blob makes that astronomically rare, but the loop keeps the
    // asymmetry guarantee unconditional.
    for salt in 0..16u64 {
        let icon = render_icon(side, seed.wrapping_add(salt.wrapping_mul(0x9e37_79b9)));
        if icon_is_asymmetric(&icon) {
            return Ok(icon);
        }
    }
    Err(Error::invalid(format!(
        "could not draw an asymmetric icon for side {side}, seed {seed}"
    )))
}

fn render_icon(side: usize, seed: u64) -> IconImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = side as f64;
    let c = (p - 1.0) / 2.0;
    // (amplitude, center x, center y, width)
    let mut blobs: Vec<(f64, f64, f64, f64)> = Vec::new();
    // Dominant blob at a fixed radius, random direction.
    let theta = rng.gen::<f64>() * std::f64::consts::TAU;
    blobs.push((
        1.0,
        c + 0.22 * p * theta.cos(),
        c + 0.22 * p * theta.sin(),
        0.18 * p,
    ));
    for _ in 0..4 {
        let amp = if rng.gen::<bool>() { 0.35 } else { -0.35 } * rng.gen::<f64>().max(0.3);
        let phi = rng.gen::<f64>() * std::f64::consts::TAU;
        let r = rng.gen::<f64>() * 0.30 * p;
        let width = (0.10 + 0.10 * rng.gen::<f64>()) * p;
        blobs.push((amp, c + r * phi.cos(), c + r * phi.sin(), width));
    }
    let tilt = 0.05;
    let mut pixels = vec![0.0f64; side * side];
    for i in 0..side {
        for j in 0..side {
            let (x, y) = (j as f64, i as f64);
            let mut v = tilt * (x - c) / p;
            for &(amp, bx, by, w) in &blobs {
                let d2 = (x - bx).powi(2) + (y - by).powi(2);
                v += amp * (-d2 / (2.0 * w * w)).exp();
            }
            pixels[i * side + j] = v;
        }
    }
    let lo = pixels.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = pixels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    for px in &mut pixels {
        *px = ((*px - lo) / span).clamp(0.0, 1.0);
    }
    IconImage { pixels, side }
}

/// Relative Frobenius distance between the icon and its exact quarter-turn
/// index rotations must exceed 1% for every turn.
fn icon_is_asymmetric(icon: &IconImage) -> bool {
    let p = icon.side;
    let px = &icon.pixels;
    let norm = accum::norm(px).max(f64::MIN_POSITIVE);
    let mut min_rel = f64::INFINITY;
    for turn in 1..4 {
        let mut diff_sq = accum::Kahan::new();
        for i in 0..p {
            for j in 0..p {
                let rotated = match turn {
                    1 => px[(p - 1 - j) * p + i],
                    2 => px[(p - 1 - i) * p + (p - 1 - j)],
                    _ => px[j * p + (p - 1 - i)],
                };
                let d = px[i * p + j] - rotated;
                diff_sq.add(d * d);
            }
        }
        min_rel = min_rel.min(diff_sq.value().sqrt() / norm);
    }
    min_rel > 0.01
}

/// Rotate the icon counterclockwise by `angle` radians about its center with
/// bilinear interpolation, zero-padding samples that fall outside the frame.
/// Returns the flattened rotated image.
pub fn rotate_image(icon: &IconImage, angle: f64) -> Vec<f64> {
    let p = icon.side;
    let src = &icon.pixels;
    let c = (p as f64 - 1.0) / 2.0;
    let (sin, cos) = angle.sin_cos();
    let mut out = vec![0.0f64; p * p];
    for i in 0..p {
        let y = i as f64 - c;
        for j in 0..p {
            let x = j as f64 - c;
            // Sample the source at the inverse-rotated position so the image
            // content turns forward by `angle`.
            let u = c + cos * x + sin * y;
            let v = c + cos * y - sin * x;
            out[i * p + j] = bilinear(src, p, v, u);
        }
    }
    out
}

/// Bilinear sample of a row-major `p x p` image at fractional (row, col),
/// treating everything outside the frame as zero.
fn bilinear(img: &[f64], p: usize, row: f64, col: f64) -> f64 {
    let r0 = row.floor();
    let c0 = col.floor();
    let fr = row - r0;
    let fc = col - c0;
    let mut acc = 0.0;
    for (dr, wr) in [(0i64, 1.0 - fr), (1, fr)] {
        if wr == 0.0 {
            continue;
        }
        let r = r0 as i64 + dr;
        if r < 0 || r >= p as i64 {
            continue;
        }
        for (dc, wc) in [(0i64, 1.0 - fc), (1, fc)] {
            if wc == 0.0 {
                continue;
            }
            let c = c0 as i64 + dc;
            if c < 0 || c >= p as i64 {
                continue;
            }
            acc += wr * wc * img[r as usize * p + c as usize];
        }
    }
    acc
}

/// Rotate `icon` to `n` angles drawn uniformly from `[0, 2*pi)` with a seeded
/// generator; row `i` of the dataset is the flattened rotation by `angles[i]`.
pub fn generate_rotated_dataset(icon: &IconImage, n: usize, seed: u64) -> Result<RotationSet> {
    if n == 0 {
        return Err(Error::invalid("rotation set needs at least one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angles: Vec<f64> = (0..n)
        .map(|_| rng.gen::<f64>() * std::f64::consts::TAU)
        .collect();
    let d = icon.side * icon.side;
    let mut data = Vec::with_capacity(n * d);
    for &a in &angles {
        data.extend(rotate_image(icon, a));
    }
    Ok(RotationSet {
        dataset: Dataset::new(data, n, d)?,
        angles,
    })
}

/// Write angles as `index,angle` CSV next to a generated dataset.
pub fn save_angles_csv(path: &Path, angles: &[f64]) -> Result<()> {
    let mut out = String::from("index,angle\n");
    for (i, a) in angles.iter().enumerate() {
        out.push_str(&format!("{i},{a:.17e}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read angles written by [`save_angles_csv`].
pub fn load_angles_csv(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut angles = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || (idx == 0 && line.starts_with("index")) {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or(line).trim();
        let a: f64 = field.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: format!("cannot parse angle {field:?}"),
        })?;
        angles.push(a);
    }
    Ok(angles)
}
