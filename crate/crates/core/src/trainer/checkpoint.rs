//! Binary checkpoint format.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "ICTH"
//! 4       4     format version, u32 LE (currently 1)
//! 8       4     d, u32 LE
//! 12      4     hidden width, u32 LE
//! 16      8*P   parameters, f64 LE, in the flat order documented on HeadParams
//! ```
//! where `P = 2d^2 + (d+1)h + (h+1)`.

use std::path::Path;

use super::heads::{param_count, HeadParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ICTH";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn checkpoint_bytes(params: &HeadParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(params.hidden() as u32).to_le_bytes());
    for x in params.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn parse_checkpoint(bytes: &[u8], path: &Path) -> Result<HeadParams> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "missing ICTH magic"));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = word(4);
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported version {version}"),
        ));
    }
    let dim = word(8) as usize;
    let hidden = word(12) as usize;
    let expected = HEADER_LEN + 8 * param_count(dim, hidden);
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "size {} != expected {expected} for d={dim}, h={hidden}",
                bytes.len()
            ),
        ));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    HeadParams::from_flat(dim, hidden, data)
}

pub fn write_checkpoint(params: &HeadParams, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<HeadParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes, path)
}
