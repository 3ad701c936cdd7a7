//! Matrix-free diffusion-map embeddings for large sample sets.
//!
//! The usual route to a diffusion-map embedding materializes the full N x N
//! kernel matrix, which caps N somewhere in the tens of thousands.  This crate
//! never forms that matrix.  Every kernel it supports — truncated-series
//! Gaussian kernels, kernels with a graph structure over the *features*, and
//! windowed convolutions over trailing sample windows — can be applied to a
//! vector in O(N * D) time through the identity that squared distances split
//! into row norms and a Gram product.  A Lanczos eigensolver that only ever
//! asks for operator-vector products sits on top, so the end-to-end cost of an
//! embedding is linear in the number of samples.
//!
//! The crate is organized around small, composable pieces:
//!
//! * [`data`] — dataset container, binary/CSV I/O, and a rotated-icon
//!   generator that produces datasets with a known circular structure.
//! * [`kernel`] — squared-distance and truncated-series matvecs plus dense
//!   oracles for cross-checking them.
//! * [`feature`] — kernels over the feature index set: sparse symmetric
//!   graphs and periodic lattice adjacencies.
//! * [`nlsa`] — windowed-convolution kernels over trailing sample windows.
//! * [`diffusion`] — degree normalization and the symmetric diffusion
//!   operator.
//! * [`lanczos`] — matrix-free symmetric eigensolver with full
//!   reorthogonalization.
//! * [`pipeline`] — end-to-end embedding runs, circle-recovery metrics, and
//!   the linear-scaling benchmark.
//! * [`verify`] — self-check suites that compare every matrix-free path
//!   against an independently built dense operator.
//!
//! Each capability has a runnable demonstration under `examples/`:
//!
//! ```text
//! cargo run --release --example rotated_icon_dataset
//! cargo run --release --example matrix_free_kernel
//! cargo run --release --example feature_graph_kernels
//! cargo run --release --example windowed_nlsa
//! cargo run --release --example diffusion_embedding
//! cargo run --release --example lanczos_solver
//! cargo run --release --example scaling_benchmark
//! ```

pub mod accum;
pub mod data;
pub mod diffusion;
pub mod error;
pub mod feature;
pub mod kernel;
pub mod lanczos;
pub mod memtrack;
pub mod nlsa;
pub mod pipeline;
pub mod plot;
pub mod verify;

pub use data::Dataset;
pub use diffusion::{DiffusionConfig, DiffusionOperator};
pub use error::{Error, Result};
pub use feature::FeatureKernel;
pub use kernel::{KernelConfig, SeriesMode};
pub use lanczos::{EigenResult, LanczosConfig};
pub use nlsa::ConvolutionSpec;
pub use pipeline::{CircleMetrics, EmbedConfig, EmbedRun, ScalingReport};

// Unit tests measure allocation behavior through the tracking allocator;
// binaries opt in with the same one-liner.
#[cfg(test)]
#[global_allocator]
static TEST_ALLOC: memtrack::TrackingAllocator = memtrack::TrackingAllocator;
