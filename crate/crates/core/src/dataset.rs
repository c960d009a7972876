//! Triplet records, label sets, and dataset validation.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{Error, Result, Violation};

/// Smallest embedding dimension the toolkit accepts.
pub const MIN_DIM: usize = 2;

/// One preference sample: three images ordered `img3 > img2 > img1` by
/// human preference, plus the basic prompt and its refined variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub id: String,
    pub img1: Embedding,
    pub img2: Embedding,
    pub img3: Embedding,
    pub prompt_easy: Embedding,
    pub prompt_ref: Embedding,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl TripletRecord {
    pub fn images(&self) -> [&Embedding; 3] {
        [&self.img1, &self.img2, &self.img3]
    }

    fn embeddings(&self) -> [&Embedding; 5] {
        [
            &self.img1,
            &self.img2,
            &self.img3,
            &self.prompt_easy,
            &self.prompt_ref,
        ]
    }

    fn mismatched_dim(&self, expected: usize) -> Option<usize> {
        self.embeddings()
            .iter()
            .map(|e| e.dim())
            .find(|&d| d != expected)
    }
}

/// Ground-truth ICT labels for one triplet: `e*` against the basic prompt,
/// `r*` against the refined prompt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IctLabelSet {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

impl IctLabelSet {
    /// Checks range, ordering, and the refined-below-basic relation.
    pub fn validate(&self) -> Result<()> {
        let all = [self.e1, self.e2, self.e3, self.r1, self.r2, self.r3];
        if all.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidLabels(format!("out of [0,1]: {all:?}")));
        }
        if self.e3 != 1.0 || self.r3 != 1.0 {
            return Err(Error::InvalidLabels("e3 and r3 must equal 1".into()));
        }
        if !(self.e1 <= self.e2 && self.r1 <= self.r2) {
            return Err(Error::InvalidLabels(format!("unordered: {all:?}")));
        }
        if !(self.r1 <= self.e1 && self.r2 <= self.e2) {
            return Err(Error::InvalidLabels(format!(
                "refined above basic: {all:?}"
            )));
        }
        Ok(())
    }

    pub fn basic(&self) -> [f64; 3] {
        [self.e1, self.e2, self.e3]
    }

    pub fn refined(&self) -> [f64; 3] {
        [self.r1, self.r2, self.r3]
    }

    /// Prediction order used by the regression loss: `[e1, e2, e3, r1, r2, r3]`.
    pub fn as_array(&self) -> [f64; 6] {
        [self.e1, self.e2, self.e3, self.r1, self.r2, self.r3]
    }
}

/// A non-empty-by-default dataset whose records share one dimension and have
/// unique, non-empty ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedDataset {
    dim: usize,
    records: Vec<TripletRecord>,
}

impl ValidatedDataset {
    /// An empty dataset of a known dimension, as read from an empty manifest.
    pub fn empty(dim: usize) -> Result<Self> {
        if dim < MIN_DIM {
            return Err(Error::DimensionTooSmall(dim, MIN_DIM));
        }
        Ok(Self {
            dim,
            records: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[TripletRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<TripletRecord> {
        self.records
    }
}

pub fn validate_dataset(records: Vec<TripletRecord>) -> Result<ValidatedDataset> {
    let Some(first) = records.first() else {
        return Err(Error::EmptyDataset);
    };
    let dim = first.img1.dim();
    if dim < MIN_DIM {
        return Err(Error::DimensionTooSmall(dim, MIN_DIM));
    }

    let mut violations = Vec::new();
    let mut seen = HashSet::with_capacity(records.len());
    for (index, r) in records.iter().enumerate() {
        if r.id.is_empty() {
            violations.push(Violation::EmptyId { index });
        } else if !seen.insert(r.id.as_str()) {
            violations.push(Violation::DuplicateId(r.id.clone()));
        }
        if let Some(found) = r.mismatched_dim(dim) {
            violations.push(Violation::DimensionMismatch {
                id: r.id.clone(),
                expected: dim,
                found,
            });
        }
    }

    if violations.is_empty() {
        Ok(ValidatedDataset { dim, records })
    } else {
        Err(Error::InvalidDataset(violations))
    }
}
