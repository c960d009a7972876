use std::path::PathBuf;

use thiserror::Error;

/// A single invariant violation found while validating a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    DuplicateId(String),
    EmptyId {
        index: usize,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::DimensionMismatch {
                id,
                expected,
                found,
            } => write!(f, "record {id:?}: dimension {found}, expected {expected}"),
            Violation::DuplicateId(id) => write!(f, "duplicate id {id:?}"),
            Violation::EmptyId { index } => write!(f, "record #{index} has an empty id"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm is zero or below 1e-12")]
    ZeroVector,
    #[error("vector contains a non-finite entry")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dimension {0} is below the minimum of {1}")]
    DimensionTooSmall(usize, usize),
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset failed validation: {}", join_violations(.0))]
    InvalidDataset(Vec<Violation>),
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("containment threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),
    #[error("projected vector has norm <= 1e-12")]
    DegenerateProjection,
    #[error("information state has zero image information")]
    DegenerateState,
    #[error("invalid information state: {0}")]
    InvalidState(String),
    #[error("labels violate ordering invariants: {0}")]
    InvalidLabels(String),
    #[error("non-finite loss in batch {batch} of epoch {epoch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{} record(s) failed: {}", .0.len(), join_records(.0))]
    RecordErrors(Vec<(String, Error)>),
    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable code used as the prefix of CLI error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::ZeroVector => "ZERO_VECTOR",
            Error::NonFinite => "NON_FINITE",
            Error::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            Error::DimensionTooSmall(..) => "DIMENSION_TOO_SMALL",
            Error::DuplicateId(_) => "DUPLICATE_ID",
            Error::EmptyDataset => "EMPTY_DATASET",
            Error::InvalidDataset(_) => "INVALID_DATASET",
            Error::NonPositiveTemperature(_) => "NON_POSITIVE_TEMPERATURE",
            Error::NonPositiveThreshold(_) => "NON_POSITIVE_THRESHOLD",
            Error::DegenerateProjection => "DEGENERATE_PROJECTION",
            Error::DegenerateState => "DEGENERATE_STATE",
            Error::InvalidState(_) => "INVALID_STATE",
            Error::InvalidLabels(_) => "INVALID_LABELS",
            Error::NonFiniteLoss { .. } => "NON_FINITE_LOSS",
            Error::InvalidConfig(_) => "INVALID_CONFIG",
            Error::RecordErrors(_) => "RECORD_ERRORS",
            Error::Format { .. } => "FORMAT",
            Error::Io { .. } => "IO",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

fn join_records(v: &[(String, Error)]) -> String {
    v.iter()
        .map(|(id, e)| format!("{id}: {e}"))
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
