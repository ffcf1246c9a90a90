//! Self-supervised visual representation learning by relative patch-position
//! prediction, with nearest-neighbor retrieval, geometric-verification
//! mining, and purity-coverage evaluation.

pub mod cli;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod mining;
pub mod nn;
pub mod pretext;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
