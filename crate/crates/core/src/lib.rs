//! Learning-rate tooling for small-data image classifiers: a range test to
//! pick the starting rate, cosine annealing with warm restarts and growing
//! cycles, three-group differential rates with freeze/precompute fine-tuning,
//! and a benchmark harness comparing that pipeline against fixed-rate
//! training with manual restarts.

pub mod bench;
pub mod data;
pub mod error;
pub mod finder;
pub mod groups;
pub mod nn;
pub mod schedule;

pub use error::{Error, Result};
