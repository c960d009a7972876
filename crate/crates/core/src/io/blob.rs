//! `ICTE` embedding blobs.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "ICTE"
//! 4       4           format version, u32 LE (currently 1)
//! 8       4           dim, u32 LE
//! 12      8           count, u64 LE
//! 20      4*dim*count rows of f32 LE, row-major
//! ```

use std::path::Path;

use crate::error::{Error, Result};

pub const BLOB_MAGIC: &[u8; 4] = b"ICTE";
pub const BLOB_VERSION: u32 = 1;
pub const BLOB_HEADER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBlob {
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingBlob {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    /// Appends a row, narrowing to f32, and returns its index.
    pub fn push(&mut self, row: &[f64]) -> Result<usize> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: row.len(),
            });
        }
        self.data.extend(row.iter().map(|&x| x as f32));
        Ok(self.count() - 1)
    }

    pub fn row(&self, i: usize) -> Option<&[f32]> {
        (i < self.count()).then(|| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn row_f64(&self, i: usize) -> Option<Vec<f64>> {
        self.row(i).map(|r| r.iter().map(|&x| x as f64).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(blob_size(self.dim, self.count()));
        out.extend_from_slice(BLOB_MAGIC);
        out.extend_from_slice(&BLOB_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.count() as u64).to_le_bytes());
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < BLOB_HEADER_LEN || &bytes[..4] != BLOB_MAGIC {
            return Err(Error::format(path, "missing ICTE magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != BLOB_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported version {version}"),
            ));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        if dim == 0 {
            return Err(Error::format(path, "dim is zero"));
        }
        let expected = dim
            .checked_mul(count)
            .and_then(|x| x.checked_mul(4))
            .and_then(|x| x.checked_add(BLOB_HEADER_LEN));
        if expected != Some(bytes.len()) {
            return Err(Error::format(
                path,
                format!(
                    "size {} does not match dim {dim} x count {count}",
                    bytes.len()
                ),
            ));
        }
        let data = bytes[BLOB_HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { dim, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

/// `20 + 4 * dim * count`.
pub fn blob_size(dim: usize, count: usize) -> usize {
    BLOB_HEADER_LEN + 4 * dim * count
}
