//! Persistent memo of polarization calls.
//!
//! The on-disk form is newline-delimited JSON, one `{"digest", "output"}`
//! object per line, appended as new keys are fetched. The first output
//! recorded for a digest is authoritative.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use once_cell::sync::OnceCell;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PolarizeError;
use crate::cogspace::Pole;

pub const DEFAULT_CACHE_PATH: &str = "./polarize_cache.ndjson";

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    digest: String,
    output: String,
}

/// Stable content hash of one polarization request.
pub fn cache_digest(backend_id: &str, prompt: &str, dimension: &str, pole: Pole) -> String {
    let mut h = Sha256::new();
    for part in [backend_id.as_bytes(), prompt.as_bytes(), dimension.as_bytes()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    h.update([pole.bit()]);
    hex::encode(h.finalize())
}

#[derive(Debug, Default)]
pub struct PolarizationCache {
    entries: Mutex<HashMap<String, Arc<OnceCell<String>>>>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl PolarizationCache {
    /// A cache that lives only as long as the process.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) the cache file at `path` and loads its records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, PolarizeError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |e: std::io::Error| PolarizeError::Cache {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io_err)?);
            for (lineno, line) in reader.lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheRecord =
                    serde_json::from_str(&line).map_err(|e| PolarizeError::Cache {
                        path: path.display().to_string(),
                        message: format!("line {}: {e}", lineno + 1),
                    })?;
                entries
                    .entry(rec.digest)
                    .or_insert_with(|| Arc::new(OnceCell::with_value(rec.output)));
            }
        } else if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err)?;
        Ok(Self {
            entries: Mutex::new(entries),
            file: Some(Mutex::new(file)),
            path: Some(path),
            ..Self::default()
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries
            .lock()
            .unwrap()
            .values()
            .filter(|c| c.get().is_some())
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    /// Number of times `fetch` actually ran.
    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    /// Returns the cached output for `digest`, running `fetch` at most once per
    /// digest per process. Concurrent callers with the same digest wait for
    /// the first fetch; distinct digests do not block each other.
    pub fn get_or_fetch<F>(&self, digest: &str, fetch: F) -> Result<String, PolarizeError>
    where
        F: FnOnce() -> Result<String, PolarizeError>,
    {
        let cell = {
            let mut map = self.entries.lock().unwrap();
            map.entry(digest.to_owned()).or_default().clone()
        };
        let mut fetched = false;
        let out = cell.get_or_try_init(|| {
            fetched = true;
            self.misses.fetch_add(1, Ordering::Relaxed);
            let output = fetch()?;
            self.append(digest, &output)?;
            Ok::<_, PolarizeError>(output)
        })?;
        if !fetched {
            self.hits.fetch_add(1, Ordering::Relaxed);
        }
        Ok(out.clone())
    }

    fn append(&self, digest: &str, output: &str) -> Result<(), PolarizeError> {
        let Some(file) = &self.file else {
            return Ok(());
        };
        let mut line = serde_json::to_string(&CacheRecord {
            digest: digest.to_owned(),
            output: output.to_owned(),
        })
        .expect("cache record serializes");
        line.push('\n');
        let mut f = file.lock().unwrap();
        f.write_all(line.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|e| PolarizeError::Cache {
                path: self
                    .path
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
                message: e.to_string(),
            })
    }
}
