//! Error type shared across the crate.

use std::path::PathBuf;

/// Convenience alias used by every fallible function in the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building or applying an operator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument is out of range or inconsistent.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input data contained a NaN or infinity where a finite value is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A file had the wrong magic, version, or length for the binary dataset
    /// format.
    #[error("malformed dataset file {path}: {reason}")]
    MalformedDataset { path: PathBuf, reason: String },

    /// Text input (CSV rows, COO triples) failed to parse.
    #[error("parse error at {path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    /// Underlying I/O failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A degree or normalization entry that must be strictly positive was not:
    /// the kernel graph is disconnected at this bandwidth or the series
    /// truncation went negative.  `diagnostic` carries a bandwidth suggestion
    /// when one could be computed.
    #[error("non-positive degree {value:.3e} at sample {index}{diagnostic}")]
    DegreeUnderflow {
        index: usize,
        value: f64,
        diagnostic: String,
    },

    /// The tridiagonal QL iteration failed to converge; indicates non-finite
    /// input rather than a genuinely hard matrix.
    #[error("tridiagonal eigensolve did not converge at row {0}")]
    TridiagonalNoConvergence(usize),

    /// The embedding collapsed to a point, so circle metrics are undefined.
    #[error("degenerate embedding: mean radius {0:.3e} is indistinguishable from zero")]
    DegenerateEmbedding(f64),

    /// A verification suite or fit was asked for with too little data.
    #[error("fit refused: {0}")]
    FitRefused(String),
}

impl Error {
    /// Attach a path to a raw `io::Error`.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Shorthand for [`Error::InvalidArgument`] with formatted text.
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
