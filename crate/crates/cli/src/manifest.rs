//! Per-command run manifests and content hashing of artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// An input or output file, named relative to its root and hashed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    /// `config:<relative path>` or `output:<relative path>`.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    #[serde(default)]
    pub backend: Option<String>,
    #[serde(default)]
    pub cache_mode: Option<String>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    /// Completion fingerprints consumed, in issue order.
    pub fingerprints: Vec<String>,
    pub warnings: Vec<String>,
    pub stats: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    pub fn new(command: &str, config_hash: String, seed: u64) -> Manifest {
        Manifest {
            command: command.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            config_hash,
            seed,
            backend: None,
            cache_mode: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            fingerprints: Vec::new(),
            warnings: Vec::new(),
            stats: BTreeMap::new(),
        }
    }

    pub fn stat(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("stat serializes");
        self.stats.insert(key.to_owned(), v);
    }

    /// File name of the manifest for `command`.
    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.json")
    }
}

/// sha256 of a file, or of a directory as the hash over its sorted
/// `(relative path, file hash)` pairs.
pub fn hash_path(path: &Path) -> Result<String, CliError> {
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, path, &mut files)?;
        files.sort();
        let mut h = Sha256::new();
        for rel in files {
            let key = rel.to_string_lossy().replace('\\', "/");
            h.update(key.as_bytes());
            h.update([0]);
            h.update(hash_file(&path.join(&rel))?.as_bytes());
            h.update([0]);
        }
        Ok(hex::encode(h.finalize()))
    } else {
        hash_file(path)
    }
}

fn hash_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Failed(format!("reading {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

/// Writes through a sibling temporary file so readers never see a
/// truncated artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn to_pretty_json(value: &impl Serialize) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}
