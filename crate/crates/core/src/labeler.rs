//! Ground-truth ICT labels for preference triplets.
//!
//! The most preferred image always fully contains both prompts. The other
//! two are scored by thresholded similarity to the basic prompt, with the
//! least preferred image capped at the score of the middle one. Refined-prompt
//! labels scale the basic ones by the basic/refined prompt similarity.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dataset::{IctLabelSet, TripletRecord, ValidatedDataset};
use crate::error::{Error, Result};
use crate::geometry::{cosine_similarity, threshold_containment, Similarity};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub record: TripletRecord,
    pub labels: IctLabelSet,
    /// Similarity of the basic and refined prompts, clamped to `[0, 1]`.
    pub text_sim: f64,
}

/// Basic-prompt labels `[e1, e2, e3]`.
pub fn basic_labels(record: &TripletRecord, theta: f64) -> Result<[f64; 3]> {
    let c2 = threshold_containment(cosine_similarity(&record.img2, &record.prompt_easy)?, theta)?;
    let c1 = threshold_containment(cosine_similarity(&record.img1, &record.prompt_easy)?, theta)?;
    Ok(basic_from_containment(c1, c2))
}

/// `[min(c1, c2), c2, 1]` from precomputed containment values.
pub fn basic_from_containment(c1: f64, c2: f64) -> [f64; 3] {
    [c1.min(c2), c2, 1.0]
}

/// Refined-prompt labels `[r1, r2, r3]`. Negative prompt similarity is
/// floored at zero.
pub fn refined_labels(basic: [f64; 3], text_sim: Similarity) -> [f64; 3] {
    let s = text_sim.non_negative();
    [basic[0] * s, basic[1] * s, 1.0]
}

pub fn label_record(record: &TripletRecord, theta: f64) -> Result<LabeledRecord> {
    let e = basic_labels(record, theta)?;
    let sim = cosine_similarity(&record.prompt_easy, &record.prompt_ref)?;
    let r = refined_labels(e, sim);
    let labels = IctLabelSet {
        e1: e[0],
        e2: e[1],
        e3: e[2],
        r1: r[0],
        r2: r[1],
        r3: r[2],
    };
    labels.validate()?;
    Ok(LabeledRecord {
        record: record.clone(),
        labels,
        text_sim: sim.non_negative(),
    })
}

/// Labels every record in input order. Failures are collected across the
/// whole dataset and reported together with their record ids.
pub fn label_dataset(dataset: &ValidatedDataset, config: &RunConfig) -> Result<Vec<LabeledRecord>> {
    if !(config.theta > 0.0) {
        return Err(Error::NonPositiveThreshold(config.theta));
    }
    let mut out = Vec::with_capacity(dataset.len());
    let mut failures = Vec::new();
    for r in dataset.records() {
        match label_record(r, config.theta) {
            Ok(l) => out.push(l),
            Err(e) => failures.push((r.id.clone(), e)),
        }
    }
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(Error::RecordErrors(failures))
    }
}
