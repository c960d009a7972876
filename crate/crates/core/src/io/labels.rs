//! Labels CSV: header `id,e1,e2,e3,r1,r2,r3`, values to six decimals.

use std::collections::HashMap;
use std::path::Path;

use crate::dataset::{IctLabelSet, ValidatedDataset};
use crate::error::{Error, Result};
use crate::geometry::cosine_similarity;
use crate::labeler::LabeledRecord;

pub const LABELS_HEADER: [&str; 7] = ["id", "e1", "e2", "e3", "r1", "r2", "r3"];

pub fn labels_csv(labeled: &[LabeledRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(LABELS_HEADER).expect("in-memory write");
    for l in labeled {
        let mut row = vec![l.record.id.clone()];
        row.extend(l.labels.as_array().iter().map(|x| format!("{x:.6}")));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

pub fn parse_labels_csv(text: &str, path: &Path) -> Result<Vec<(String, IctLabelSet)>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .clone();
    if header.iter().ne(LABELS_HEADER) {
        return Err(Error::format(
            path,
            format!("expected header {}", LABELS_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(|e| Error::format(path, e.to_string()))?;
        let line = i + 2;
        let mut v = [0.0; 6];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = row[k + 1].parse().map_err(|_| {
                Error::format(path, format!("line {line}: bad number {:?}", &row[k + 1]))
            })?;
        }
        let labels = IctLabelSet {
            e1: v[0],
            e2: v[1],
            e3: v[2],
            r1: v[3],
            r2: v[4],
            r3: v[5],
        };
        labels
            .validate()
            .map_err(|e| Error::format(path, format!("line {line}: {e}")))?;
        out.push((row[0].to_string(), labels));
    }
    Ok(out)
}

pub fn read_labels(path: &Path) -> Result<Vec<(String, IctLabelSet)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels_csv(&text, path)
}

/// Pairs every dataset record with its label row by id.
pub fn attach_labels(
    dataset: &ValidatedDataset,
    labels: &[(String, IctLabelSet)],
) -> Result<Vec<LabeledRecord>> {
    let by_id: HashMap<&str, &IctLabelSet> =
        labels.iter().map(|(id, l)| (id.as_str(), l)).collect();
    let mut out = Vec::with_capacity(dataset.len());
    let mut failures = Vec::new();
    for r in dataset.records() {
        match by_id.get(r.id.as_str()) {
            Some(&&labels) => {
                let text_sim = cosine_similarity(&r.prompt_easy, &r.prompt_ref)?.non_negative();
                out.push(LabeledRecord {
                    record: r.clone(),
                    labels,
                    text_sim,
                });
            }
            None => failures.push((r.id.clone(), Error::InvalidLabels("no label row".into()))),
        }
    }
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(Error::RecordErrors(failures))
    }
}
