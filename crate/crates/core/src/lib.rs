//! Joint order-based structure learning for collections of Gaussian DAG
//! models that share one causal ordering.
//!
//! Node labels are 0-based inside the library. Text formats and the CLI use
//! 1-based labels.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dag;
pub mod equivalence_oracle;
pub mod error;
mod linalg;
pub mod permutations;
pub mod rng;
pub mod sampler;
pub mod scoring;
pub mod selection;
pub mod synth;

pub use dag::{Dag, WeightedDag};
pub use error::{Error, Result};
pub use permutations::{kendall_tau, Move, Neighborhood, Ordering};
pub use scoring::{Dataset, ScoreParams};
