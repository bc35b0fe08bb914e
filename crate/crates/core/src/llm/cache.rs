use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::DecodingConfig;

/// Content hash over model id, decoding triple and prompt bytes.
pub fn cache_key(prompt: &str, config: &DecodingConfig, model: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model.as_bytes());
    hasher.update([0u8]);
    hasher.update(config.temperature.to_bits().to_le_bytes());
    hasher.update(config.top_p.to_bits().to_le_bytes());
    hasher.update(config.max_tokens.to_le_bytes());
    hasher.update([0u8]);
    hasher.update(prompt.as_bytes());
    hex::encode(hasher.finalize())
}

/// One line of the cache file. Field order is the on-disk order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub model: String,
    pub config: DecodingConfig,
    pub prompt: String,
    pub response: String,
    pub timestamp: String,
}

/// Prompt-to-response store backed by an append-only JSONL file.
///
/// Later records for the same key win when loading.
#[derive(Debug, Default)]
pub struct ResponseCache {
    entries: RwLock<HashMap<String, String>>,
    writer: Mutex<Option<File>>,
    path: Option<PathBuf>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads every record in `path`. A missing file is an empty cache.
    pub fn load(path: &Path) -> Result<Self, String> {
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| format!("{}: {e}", path.display()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: CacheRecord = serde_json::from_str(&line)
                    .map_err(|e| format!("{}:{}: malformed cache record: {e}", path.display(), n + 1))?;
                entries.insert(record.key, record.response);
            }
        }
        Ok(Self { entries: RwLock::new(entries), writer: Mutex::new(None), path: Some(path.to_path_buf()) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    /// Stores a record in memory and, for file-backed caches, appends it as
    /// one JSON line. Appends are serialized through a single writer.
    pub fn insert(&self, record: CacheRecord) -> Result<(), String> {
        if let Some(path) = &self.path {
            let mut guard = self.writer.lock().expect("cache writer lock");
            if guard.is_none() {
                if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    std::fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
                }
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| format!("{}: {e}", path.display()))?;
                *guard = Some(file);
            }
            let file = guard.as_mut().expect("writer opened");
            let mut line = serde_json::to_string(&record).map_err(|e| e.to_string())?;
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(|e| format!("{}: {e}", path.display()))?;
            file.flush().map_err(|e| e.to_string())?;
        }
        self.entries.write().expect("cache lock").insert(record.key, record.response);
        Ok(())
    }
}
