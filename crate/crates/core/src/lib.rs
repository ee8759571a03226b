//! Layer-wise representation quality for foundation-model cell embeddings.
//!
//! Given one embedding matrix per transformer block and per-cell annotations,
//! the crate scores every layer on two tasks:
//!
//! * **trajectory preservation**: a cosine kNN graph per layer feeds a
//!   diffusion map, diffusion pseudotime (DPT) is computed from a root cell,
//!   and the layer score is the Spearman correlation with a reference
//!   pseudotime;
//! * **perturbation RSA**: per-perturbation centroid embeddings are compared
//!   by cosine similarity, differential-expression profiles are compared by
//!   Spearman correlation, and the layer score is the Spearman correlation of
//!   the two upper triangles.
//!
//! The [`sweep`] module drives both tasks across layers and summarizes the
//! resulting depth curves.

pub mod container;
pub mod diffusion;
pub mod error;
pub mod neighbors;
pub mod prep;
pub mod rsa;
pub mod stats;
pub mod sweep;
pub mod synth;

mod linalg;

pub use error::{Error, Result};
