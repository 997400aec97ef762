//! Artifact bookkeeping: every file an experiment writes is recorded, hashed
//! and summarised in `manifest.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub outputs: Vec<OutputEntry>,
    /// Hash over the sorted `(path, sha256)` list of every output.
    pub content_hash: String,
    pub runtime_seconds: f64,
    /// Final metrics per run label (`fdm` for the reference solver).
    pub metrics: BTreeMap<String, BTreeMap<String, f64>>,
    pub failures: Vec<String>,
}

/// Writes files under one root and remembers their relative paths.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| io_error(root, e))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, rel: &str, contents: &str) -> CliResult<()> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
        }
        std::fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
        self.record(rel);
        Ok(())
    }

    /// Register a file written by other code.
    pub fn record(&mut self, rel: &str) {
        if !self.written.iter().any(|w| w == rel) {
            self.written.push(rel.to_string());
        }
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

pub fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Hash every listed file and the sorted list as a whole.
pub fn hash_outputs(root: &Path, files: &[String]) -> CliResult<(Vec<OutputEntry>, String)> {
    let mut sorted: Vec<&String> = files.iter().collect();
    sorted.sort();
    let mut entries = Vec::with_capacity(sorted.len());
    let mut tree = Sha256::new();
    for rel in sorted {
        let path = root.join(rel);
        let bytes = std::fs::read(&path).map_err(|e| io_error(&path, e))?;
        let sha = hex::encode(Sha256::digest(&bytes));
        tree.update(rel.as_bytes());
        tree.update([0u8]);
        tree.update(sha.as_bytes());
        tree.update([b'\n']);
        entries.push(OutputEntry { path: rel.clone(), bytes: bytes.len() as u64, sha256: sha });
    }
    Ok((entries, hex::encode(tree.finalize())))
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises") + "\n"
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
