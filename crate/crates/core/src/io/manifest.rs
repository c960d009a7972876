//! JSONL dataset manifests.
//!
//! The first line is a header `{"dim":..,"count":..,"format_version":1}`.
//! Each following line describes one triplet, with every embedding given as
//! a `{"blob": <file>, "row": <index>}` reference. Blob paths are relative to
//! the manifest's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{validate_dataset, TripletRecord, ValidatedDataset};
use crate::embedding::{from_stored, Embedding};
use crate::error::{Error, Result};

use super::blob::EmbeddingBlob;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const BLOB_FILE: &str = "embeddings.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub dim: usize,
    pub count: usize,
    pub format_version: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingRef {
    pub blob: String,
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub img1: EmbeddingRef,
    pub img2: EmbeddingRef,
    pub img3: EmbeddingRef,
    pub prompt_easy: EmbeddingRef,
    pub prompt_ref: EmbeddingRef,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl ManifestEntry {
    fn refs(&self) -> [&EmbeddingRef; 5] {
        [
            &self.img1,
            &self.img2,
            &self.img3,
            &self.prompt_easy,
            &self.prompt_ref,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::format(path, "missing header line"))?;
        let header: ManifestHeader =
            serde_json::from_str(first).map_err(|e| Error::format(path, format!("line 1: {e}")))?;
        if header.format_version != MANIFEST_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported format_version {}", header.format_version),
            ));
        }
        let mut entries = Vec::with_capacity(header.count);
        for (i, line) in lines {
            let entry: ManifestEntry = serde_json::from_str(line)
                .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
            entries.push(entry);
        }
        if entries.len() != header.count {
            return Err(Error::format(
                path,
                format!(
                    "header count {} but {} records",
                    header.count,
                    entries.len()
                ),
            ));
        }
        Ok(Self { header, entries })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }
}

/// Resolves a manifest against its blobs into a validated dataset.
///
/// Every reference must point at an existing row of a blob whose dimension
/// matches the header. Stored f32 rows are widened to f64 before use.
pub fn load_dataset(manifest_path: &Path) -> Result<ValidatedDataset> {
    let manifest = Manifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let dim = manifest.header.dim;

    let mut blobs: BTreeMap<&str, EmbeddingBlob> = BTreeMap::new();
    for entry in &manifest.entries {
        for r in entry.refs() {
            if !blobs.contains_key(r.blob.as_str()) {
                let blob_path = base.join(&r.blob);
                let blob = EmbeddingBlob::read(&blob_path)?;
                if blob.dim() != dim {
                    return Err(Error::format(
                        &blob_path,
                        format!("blob dim {} but manifest dim {dim}", blob.dim()),
                    ));
                }
                blobs.insert(r.blob.as_str(), blob);
            }
        }
    }

    let fetch = |r: &EmbeddingRef| -> Result<Embedding> {
        let blob = &blobs[r.blob.as_str()];
        let row = blob.row_f64(r.row).ok_or_else(|| {
            Error::format(
                base.join(&r.blob),
                format!("row {} out of range (count {})", r.row, blob.count()),
            )
        })?;
        from_stored(row)
    };

    let mut records = Vec::with_capacity(manifest.entries.len());
    let mut failures = Vec::new();
    for entry in &manifest.entries {
        let built = (|| -> Result<TripletRecord> {
            Ok(TripletRecord {
                id: entry.id.clone(),
                img1: fetch(&entry.img1)?,
                img2: fetch(&entry.img2)?,
                img3: fetch(&entry.img3)?,
                prompt_easy: fetch(&entry.prompt_easy)?,
                prompt_ref: fetch(&entry.prompt_ref)?,
                meta: entry.meta.clone(),
            })
        })();
        match built {
            Ok(r) => records.push(r),
            Err(e) => failures.push((entry.id.clone(), e)),
        }
    }
    if !failures.is_empty() {
        return Err(Error::RecordErrors(failures));
    }
    if records.is_empty() {
        return ValidatedDataset::empty(dim);
    }
    validate_dataset(records)
}

/// Paths of a dataset written by [`write_dataset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetFiles {
    pub manifest: PathBuf,
    pub blob: PathBuf,
}

/// The manifest and blob for a dataset. Each record occupies five
/// consecutive blob rows: img1, img2, img3, prompt_easy, prompt_ref.
pub fn dataset_to_files(dataset: &ValidatedDataset) -> (Manifest, EmbeddingBlob) {
    let mut blob = EmbeddingBlob::new(dataset.dim());
    let mut entries = Vec::with_capacity(dataset.len());
    let mut next = |e: &Embedding| EmbeddingRef {
        blob: BLOB_FILE.to_string(),
        row: blob.push(e.as_slice()).expect("validated dims agree"),
    };
    for r in dataset.records() {
        entries.push(ManifestEntry {
            id: r.id.clone(),
            img1: next(&r.img1),
            img2: next(&r.img2),
            img3: next(&r.img3),
            prompt_easy: next(&r.prompt_easy),
            prompt_ref: next(&r.prompt_ref),
            meta: r.meta.clone(),
        });
    }
    let manifest = Manifest {
        header: ManifestHeader {
            dim: dataset.dim(),
            count: entries.len(),
            format_version: MANIFEST_VERSION,
        },
        entries,
    };
    (manifest, blob)
}

/// Writes `manifest.jsonl` and `embeddings.bin` into `dir`.
pub fn write_dataset(dataset: &ValidatedDataset, dir: &Path) -> Result<DatasetFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (manifest, blob) = dataset_to_files(dataset);
    let files = DatasetFiles {
        manifest: dir.join(MANIFEST_FILE),
        blob: dir.join(BLOB_FILE),
    };
    blob.write(&files.blob)?;
    manifest.write(&files.manifest)?;
    Ok(files)
}
