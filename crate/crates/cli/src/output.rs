//! Output directory handling: the run lock and metadata sidecars.

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use icthp::RunConfig;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const LOCK_FILE: &str = ".icthp.lock";

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Locked(path)),
            Err(e) => Err(io_error(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

pub fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Core(icthp::Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| io_error(path, e))
}

/// Sidecar written next to every output as `<file>.meta.json`.
#[derive(Debug, Serialize)]
pub struct Meta<'a, I: Serialize> {
    pub command: &'a str,
    pub tool_version: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<&'a RunConfig>,
    pub inputs: I,
}

pub fn write_meta<I: Serialize>(
    output: &Path,
    command: &str,
    config: Option<&RunConfig>,
    inputs: I,
) -> CliResult<PathBuf> {
    let meta = Meta {
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        config_hash: config.map(|c| c.hash()),
        config,
        inputs,
    };
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    let path = output.with_file_name(name);
    let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    text.push('\n');
    write_file(&path, text)?;
    Ok(path)
}
