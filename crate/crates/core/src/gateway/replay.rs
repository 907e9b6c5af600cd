use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{BackendError, CompletionBackend, CompletionRequest};

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("replay cache {path} is corrupt at line {line}: {reason}")]
    Corrupt {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("replay cache {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One line of the cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub prompt_sha256: String,
    pub temperature: f64,
    pub sample_index: usize,
    pub response: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Cache key over prompt text, temperature, sample index and (for re-asks)
/// the attempt number.
pub fn cache_key(request: &CompletionRequest) -> String {
    let mut h = Sha256::new();
    h.update(request.prompt_text.as_bytes());
    h.update([0]);
    h.update(request.temperature.to_string().as_bytes());
    h.update([0]);
    h.update(request.tag.sample.to_string().as_bytes());
    if request.tag.attempt > 0 {
        h.update([0]);
        h.update(request.tag.attempt.to_string().as_bytes());
    }
    hex::encode(h.finalize())
}

/// Backend used when a replay cache has nothing live behind it.
#[derive(Debug, Default, Clone, Copy)]
pub struct Offline;

impl CompletionBackend for Offline {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        Err(BackendError::fatal(format!(
            "replay cache miss for {} with no live backend",
            request.tag
        )))
    }
}

/// Record/replay wrapper persisting responses as append-only JSON lines.
pub struct ReplayCache<B> {
    inner: B,
    path: PathBuf,
    entries: Mutex<HashMap<String, String>>,
    writer: Mutex<File>,
    inner_calls: AtomicUsize,
}

impl<B: CompletionBackend> ReplayCache<B> {
    pub fn open(inner: B, path: &Path) -> Result<Self, CacheError> {
        let io_err = |source| CacheError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut entries = HashMap::new();
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(io_err)?;
            let line_count = text.lines().count();
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let corrupt = |reason: String| CacheError::Corrupt {
                    path: path.display().to_string(),
                    line: i + 1,
                    reason,
                };
                let record: CacheRecord =
                    serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
                if i + 1 == line_count && !text.ends_with('\n') {
                    return Err(corrupt("final record is not newline-terminated".into()));
                }
                entries.insert(record.key, record.response);
            }
        } else if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
        let writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        Ok(Self {
            inner,
            path: path.to_path_buf(),
            entries: Mutex::new(entries),
            writer: Mutex::new(writer),
            inner_calls: AtomicUsize::new(0),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Requests forwarded to the wrapped backend since opening.
    pub fn inner_calls(&self) -> usize {
        self.inner_calls.load(Ordering::SeqCst)
    }
}

impl<B: CompletionBackend> CompletionBackend for ReplayCache<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let key = cache_key(request);
        if let Some(hit) = self.entries.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        self.inner_calls.fetch_add(1, Ordering::SeqCst);
        let response = self.inner.complete(request)?;
        let record = CacheRecord {
            key: key.clone(),
            prompt_sha256: sha256_hex(request.prompt_text.as_bytes()),
            temperature: request.temperature,
            sample_index: request.tag.sample,
            response: response.clone(),
        };
        let mut line = serde_json::to_string(&record).expect("cache record serializes");
        line.push('\n');
        {
            let mut w = self.writer.lock().unwrap();
            w.write_all(line.as_bytes())
                .and_then(|_| w.flush())
                .map_err(|e| BackendError::fatal(format!("writing replay cache: {e}")))?;
        }
        self.entries.lock().unwrap().insert(key, response.clone());
        Ok(response)
    }
}
