use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::io::IoError;

/// Fields that identify one completion request. Field order is part of the
/// key derivation and must not change.
#[derive(Debug, Serialize)]
pub struct CacheKeyParts<'a> {
    pub model: &'a str,
    pub prompt: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
    pub namespace: &'a str,
}

impl CacheKeyParts<'_> {
    /// Hex SHA-256 of the compact JSON encoding.
    pub fn key(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("key parts serialize");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub model: String,
    pub text: String,
    pub latency_ms: u64,
}

/// Content-addressed store, one JSON file per key. Writes go to a temp file
/// in the same directory and are renamed into place.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, IoError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| IoError::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Unreadable or corrupt entries count as misses.
    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        let bytes = fs::read(self.path_for(key)).ok()?;
        let entry: CacheEntry = serde_json::from_slice(&bytes).ok()?;
        (entry.key == key).then_some(entry)
    }

    pub fn put(&self, entry: &CacheEntry) -> Result<(), IoError> {
        let target = self.path_for(&entry.key);
        let mut tmp =
            tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| IoError::io(&self.dir, e))?;
        let bytes = serde_json::to_vec(entry).expect("cache entry serializes");
        tmp.write_all(&bytes)
            .map_err(|e| IoError::io(tmp.path(), e))?;
        tmp.as_file()
            .sync_all()
            .map_err(|e| IoError::io(tmp.path(), e))?;
        tmp.persist(&target)
            .map_err(|e| IoError::io(&target, e.error))?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .map(|rd| {
                rd.filter_map(Result::ok)
                    .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
