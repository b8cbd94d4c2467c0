//! File protocol: reads that name the path on failure, atomic writes,
//! content hashes and TOML configuration loading.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::error::{CliError, Result};

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Writes through a temporary file in the same directory and renames it
/// over `path`, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// SHA-256 over a git-style blob header (`blob <len>\0`) and the bytes.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Parses a TOML configuration, returning it with the raw bytes for hashing.
pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<(T, Vec<u8>)> {
    let raw = read(path)?;
    let text =
        std::str::from_utf8(&raw).map_err(|e| CliError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    let value =
        toml::from_str(text).map_err(|e| CliError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    Ok((value, raw))
}

/// Fails with every listed problem at once.
pub fn check_schema(path: &Path, problems: Vec<String>) -> Result<()> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Schema { path: path.to_path_buf(), problems })
    }
}

/// Renders a CSV-producing writer into memory.
pub fn render(f: impl FnOnce(&mut Vec<u8>) -> medsel::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}
