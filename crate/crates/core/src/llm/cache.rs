use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::LlmError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub fingerprint: String,
    pub backend: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub prompt: String,
    pub text: String,
}

/// Content-addressed completions, one `<fingerprint>.json` file each.
///
/// Reads are lock-free; writes are serialized and land via rename so a crash
/// never leaves a partial entry behind.
#[derive(Debug)]
pub struct ReplayCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

fn valid_fingerprint(fp: &str) -> bool {
    !fp.is_empty() && fp.bytes().all(|b| b.is_ascii_hexdigit())
}

impl ReplayCache {
    pub fn open(dir: &Path) -> Result<Self, LlmError> {
        fs::create_dir_all(dir)?;
        Ok(ReplayCache {
            dir: dir.to_path_buf(),
            write_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, fp: &str) -> Result<PathBuf, LlmError> {
        if !valid_fingerprint(fp) {
            return Err(LlmError::Cache(format!("invalid fingerprint `{fp}`")));
        }
        Ok(self.dir.join(format!("{fp}.json")))
    }

    pub fn get(&self, fp: &str) -> Result<Option<CacheEntry>, LlmError> {
        let path = self.path(fp)?;
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let entry: CacheEntry =
            serde_json::from_slice(&bytes).map_err(|e| LlmError::Cache(format!("{}: {e}", path.display())))?;
        if entry.fingerprint != fp {
            return Err(LlmError::Cache(format!(
                "{} holds fingerprint {}",
                path.display(),
                entry.fingerprint
            )));
        }
        Ok(Some(entry))
    }

    pub fn put(&self, entry: &CacheEntry) -> Result<(), LlmError> {
        let path = self.path(&entry.fingerprint)?;
        let mut bytes = serde_json::to_vec_pretty(entry)?;
        bytes.push(b'\n');
        let _guard = self.write_lock.lock().expect("cache lock poisoned");
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(&bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| LlmError::Io(e.error))?;
        Ok(())
    }

    pub fn len(&self) -> Result<usize, LlmError> {
        let mut n = 0;
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            if name.to_string_lossy().ends_with(".json") {
                n += 1;
            }
        }
        Ok(n)
    }

    pub fn is_empty(&self) -> Result<bool, LlmError> {
        Ok(self.len()? == 0)
    }
}
