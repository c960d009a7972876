//! On-disk dataset, label, and checkpoint formats.

pub mod blob;
pub mod labels;
pub mod manifest;

pub use blob::{blob_size, EmbeddingBlob};
pub use labels::{attach_labels, labels_csv, parse_labels_csv, read_labels};
pub use manifest::{load_dataset, write_dataset, DatasetFiles, Manifest};
