//! Reward scoring for text-to-image preference data.
//!
//! Images are scored along two axes. The image-contained-text (ICT) score
//! measures how much of a prompt's content an image carries, saturating at
//! full containment. The high-preference (HP) score is an image-only
//! measure trained on preference triplets to rank whatever the ICT score
//! cannot separate. Everything operates on precomputed embedding vectors.

// Negated float comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod evaluator;
pub mod geometry;
pub mod infosim;
pub mod io;
pub mod labeler;
pub mod objectives;
pub mod rng;
pub mod trainer;

pub use config::{NegativeImages, RunConfig};
pub use dataset::{validate_dataset, IctLabelSet, TripletRecord, ValidatedDataset};
pub use embedding::{normalize_embedding, Embedding};
pub use error::{Error, Result, Violation};
pub use geometry::{cosine_similarity, Similarity};
pub use labeler::{label_dataset, LabeledRecord};
pub use rng::SeededRng;
pub use trainer::heads::HeadParams;
