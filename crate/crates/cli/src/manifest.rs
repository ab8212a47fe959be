use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use gravloc::pipeline::{RunConfig, Timings};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub stage: &'static str,
    pub message: String,
}

/// Written last; lists every other file in its directory.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub complete: bool,
    pub failure: Option<Failure>,
    pub config: RunConfig,
    pub derived: serde_json::Value,
    pub diagnostics: serde_json::Value,
    pub timings: Timings,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

pub fn file_entry(root: &Path, path: &Path) -> Result<FileEntry> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    let rel = path.strip_prefix(root).unwrap_or(path);
    Ok(FileEntry {
        path: rel.to_string_lossy().replace('\\', "/"),
        bytes: bytes.len() as u64,
        sha256: sha256_hex(&bytes),
    })
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            complete: false,
            failure: None,
            config: config.clone(),
            derived: serde_json::Value::Null,
            diagnostics: serde_json::Value::Null,
            timings: Timings::default(),
            files: Vec::new(),
        }
    }

    /// Hashes `files` (sorted by path) and writes the manifest into `root`.
    pub fn finish(mut self, root: &Path, mut files: Vec<PathBuf>) -> Result<PathBuf> {
        files.sort();
        files.dedup();
        self.files = files.iter().map(|p| file_entry(root, p)).collect::<Result<_>>()?;
        let path = root.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(&self)? + "\n";
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
