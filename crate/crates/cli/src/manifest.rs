//! JSON run manifests and the output directory that records them.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::files;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub name: String,
    pub sha256: String,
}

/// Everything needed to tell whether an output directory is current.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    /// SHA-256 of the resolved configuration as canonical JSON.
    pub config_hash: String,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub status: Status,
    pub wall_seconds: f64,
    #[serde(default)]
    pub details: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariant_report: Option<medsel::diagnostics::InvariantReport>,
}

/// Hash of `config` serialized with sorted keys.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let canonical = serde_json::to_vec(&serde_json::to_value(config)?)?;
    Ok(hex::encode(Sha256::digest(&canonical)))
}

impl Manifest {
    pub fn new<T: Serialize>(command: &str, seed: u64, config: &T) -> Result<Self> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config_hash: config_hash(config)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
            status: Status::Complete,
            wall_seconds: 0.0,
            details: Value::Null,
            error: None,
            invariant_report: None,
        })
    }

    pub fn input(&mut self, name: &str, bytes: &[u8]) {
        self.inputs.push(FileRecord { name: name.to_string(), sha256: files::content_hash(bytes) });
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&files::read(path)?)?)
    }
}

/// A directory whose files are written atomically and listed in a
/// manifest that is written last.
pub struct OutputDir {
    pub dir: PathBuf,
    pub manifest: Manifest,
    started: Instant,
}

impl OutputDir {
    pub fn create(dir: &Path, manifest: Manifest) -> Result<Self> {
        files::create_dir(dir)?;
        Ok(Self { dir: dir.to_path_buf(), manifest, started: Instant::now() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        files::write_atomic(&self.dir.join(name), bytes)?;
        self.manifest.outputs.push(FileRecord { name: name.to_string(), sha256: files::content_hash(bytes) });
        Ok(())
    }

    pub fn finish(mut self, name: &str) -> Result<Manifest> {
        self.manifest.wall_seconds = self.started.elapsed().as_secs_f64();
        let mut bytes = serde_json::to_vec_pretty(&self.manifest)?;
        bytes.push(b'\n');
        files::write_atomic(&self.dir.join(name), &bytes)?;
        Ok(self.manifest)
    }
}
