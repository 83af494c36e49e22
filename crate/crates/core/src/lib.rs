//! Content-based music similarity with a shallow triplet network.
//!
//! The crate covers the whole offline pipeline:
//!
//! - [`dataset`]: feature/metadata ingestion, the artist-filtered [`Corpus`] and its
//!   artist-disjoint train/eval split.
//! - [`transform`]: z-score standardization and Euclidean distance.
//! - [`sampler`]: (anchor, positive, negative) triplet generation with random or
//!   same-genre negatives.
//! - [`network`]: the two-layer sigmoid/tanh embedding, triplet hinge loss and its
//!   analytic gradient, plus a finite-difference gradient checker.
//! - [`model`]: the versioned text model/checkpoint format.
//! - [`trainer`]: momentum-SGD training over sampled epochs.
//! - [`evaluator`]: the one-query-per-artist retrieval AUC protocol.
//! - [`synthgen`]: hierarchical Gaussian corpora for desk-scale experiments.
//! - [`artifact`]: the binary corpus cache.

pub mod artifact;
pub mod dataset;
pub mod error;
pub mod evaluator;
pub mod model;
pub mod network;
pub mod rng;
pub mod sampler;
pub mod synthgen;
pub mod trainer;
pub mod transform;

pub use dataset::{Corpus, JoinReport, Partition, TrackRecord};
pub use error::{Error, Result};
pub use evaluator::{AucReport, Embedder};
pub use model::ModelFile;
pub use network::{Gradients, LossConfig, NetworkParams};
pub use sampler::{SamplerConfig, Strategy, Triplet};
pub use trainer::{TrainConfig, TrainLog};
pub use transform::ZScoreStats;
