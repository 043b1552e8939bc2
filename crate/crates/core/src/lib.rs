//! Numeric core for progressive few-label transfer: seeded synthetic data,
//! contrastive pretraining, anchor-constrained KMeans with eigen-sample
//! selection, and the cluster → annotate → finetune loop.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, configuration,
//! the CLI and the HTTP service live in the `eigenloop` crate.

#![no_std]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod clustering;
pub mod contrastive;
pub mod embedding;
pub mod error;
pub mod matrix;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod transfer;

pub use embedding::{cosine_sim, normalize_rows, sq_euclidean, EmbeddingSet, LabeledSet, SampleId};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use rng::RngStream;
