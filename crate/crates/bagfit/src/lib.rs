//! Bagged M-estimation for datasets too large to fit comfortably in memory.
//!
//! The estimator works in three steps:
//!
//! 1. draw `K` subsamples of size `n`, uniformly with replacement, from an
//!    `N`-row binary row store;
//! 2. fit the model on each subsample by Newton iteration, giving
//!    per-subsample coefficient vectors;
//! 3. average the `K` coefficient vectors into the bagged estimate and turn
//!    their spread into a variance estimate, confidence intervals, and Wald
//!    p-values — no additional pass over the data is needed for inference.
//!
//! The total read cost is `n * K` rows regardless of `N`, and every stage is
//! deterministic given the master seed, including under multi-threaded
//! execution.

pub mod bagging;
pub mod config;
pub mod error;
pub mod ingest;
pub mod linalg;
pub mod model;
pub mod sampler;
pub mod simulate;
pub mod solver;
pub mod stats;
pub mod store;

pub use error::{Error, Result};
