//! Triplet-based dimensionality reduction.
//!
//! The embedding minimizes a robust loss over sampled triplet constraints
//! "anchor is closer to near than to far": each triplet contributes
//! `w * log_t(1 + q_far / q_near)`, where the `q` are heavy-tailed
//! similarities of the embedded points and `log_t` is the generalized
//! logarithm, bounded above for `t > 1` so that unsatisfiable triplets
//! cannot dominate. Triplet counts grow linearly with the dataset: per point,
//! near points come from its `m` nearest neighbors with `m'` far points
//! each, plus `s` uniformly random triplets that carry global structure.
//!
//! The crate ships the full pipeline (PCA preprocessing, exact k-NN with
//! adaptive per-point scales, triplet sampling and weighting, batch gradient
//! descent with an adaptive step), a mean precision-recall AUC evaluator, a
//! battery of global-structure stress tests, and a CLI around all of it.
//!
//! ```no_run
//! use trimap::{embed, Dataset, EmbedConfig};
//!
//! let data = Dataset::gaussian_blobs(3, 100, 10, 20.0, 0).unwrap();
//! let embedding = embed(&data, &EmbedConfig::default()).unwrap();
//! assert_eq!(embedding.coords.nrows(), 300);
//! ```

pub mod analysis;
#[cfg(feature = "cli")]
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod io;
pub mod math;
pub mod optimizer;
mod par;
pub mod preprocess;
pub mod stress;
pub mod svg;
pub mod triplets;

pub use dataset::Dataset;
pub use error::{Result, TrimapError};
pub use eval::{precision_recall, PrCurve};
pub use math::KernelParams;
pub use optimizer::{
    embed, init_embedding, loss_gradient, total_loss, EmbedConfig, Embedding, InitMethod,
};
pub use preprocess::{compute_sigma, exact_knn, pca_reduce, NeighborGraph};
pub use stress::{run_stress_suite, StressOptions, StressReport, StressTest};
pub use triplets::{Triplet, TripletCounts, TripletSet};
