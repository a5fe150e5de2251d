//! Property-guided variational auto-encoder toolkit for offline model-based
//! design optimization.
//!
//! The crate implements the full loop of sampling candidate designs from a
//! generative search model, scoring them with a ground-truth oracle,
//! re-weighting, and re-fitting the model — together with the benchmark
//! machinery (synthetic oracles, imbalanced dataset construction, metrics,
//! latent-space diagnostics) needed to evaluate weighting schemes against
//! each other reproducibly.
//!
//! Module map:
//!
//! - [`matrix`]: dense row-major `f64` matrix, the universal tensor.
//! - [`rng`]: seeded ChaCha generator with named sub-streams; all randomness
//!   in the crate flows through it.
//! - [`stats`]: the shared percentile convention, Student-t intervals, ranks.
//! - [`nn`]: multilayer perceptrons with analytic gradients, Adam, and a
//!   finite-difference gradient checker.
//! - [`vae`]: the variational auto-encoder search model, its property-guided
//!   training objective, and design sampling.
//! - [`oracle`]: ground-truth scoring functions (Gaussian-mixture landscape,
//!   dataset lookup, reference-field mismatch).
//! - [`data`]: dataset containers, imbalanced-subset construction, synthetic
//!   benchmark generators, one-hot codecs, CSV loaders.
//! - [`mbo`]: the optimization loop, importance-weighting schemes, run
//!   metrics, and cross-seed aggregation.
//! - [`latent`]: latent-space structure diagnostics (PCA projection, rank
//!   correlation, radius-vs-property fit).
//!
//! Everything is `f64`; all stochastic steps take an explicit [`rng::Rng`]
//! and the same seed reproduces results bit-for-bit.

pub mod data;
pub mod error;
pub mod latent;
pub mod matrix;
pub mod mbo;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod vae;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use rng::Rng;
