//! Content-addressed stage cache: a stage result is stored under the SHA-256
//! of everything it depends on, so a changed input or setting never hits a
//! stale entry.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone)]
pub struct StageCache {
    dir: PathBuf,
}

impl StageCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        StageCache { dir: dir.into() }
    }

    pub fn key<K: Serialize>(stage: &str, input_sha: &str, settings: &K) -> Result<String> {
        let mut h = Sha256::new();
        h.update(stage.as_bytes());
        h.update([0]);
        h.update(input_sha.as_bytes());
        h.update([0]);
        h.update(serde_json::to_vec(settings)?);
        Ok(hex::encode(h.finalize()))
    }

    fn path(&self, stage: &str, key: &str) -> PathBuf {
        self.dir.join(format!("{stage}-{key}.json"))
    }

    /// A missing or unreadable entry is a miss.
    pub fn load<T: DeserializeOwned>(&self, stage: &str, key: &str) -> Option<T> {
        let bytes = fs::read(self.path(stage, key)).ok()?;
        match serde_json::from_slice(&bytes) {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("ignoring corrupt cache entry for {stage}: {e}");
                None
            }
        }
    }

    pub fn store<T: Serialize>(&self, stage: &str, key: &str, value: &T) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let tmp = self.dir.join(format!(".{stage}-{key}.tmp"));
        fs::write(&tmp, serde_json::to_vec(value)?)?;
        fs::rename(&tmp, self.path(stage, key))?;
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn store_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let cache = StageCache::new(dir.path().join("c"));
        let key = StageCache::key("forest", "abc", &(1, 2.5)).unwrap();
        assert_eq!(cache.load::<Vec<f64>>("forest", &key), None);
        let v = vec![0.1 + 0.2, 1.0 / 3.0, 1e-300];
        cache.store("forest", &key, &v).unwrap();
        assert_eq!(cache.load::<Vec<f64>>("forest", &key), Some(v));
        assert_ne!(key, StageCache::key("forest", "abd", &(1, 2.5)).unwrap());
    }

    #[test]
    fn corrupt_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = StageCache::new(dir.path());
        std::fs::write(dir.path().join("forest-k.json"), b"{not json").unwrap();
        assert_eq!(cache.load::<Vec<f64>>("forest", "k"), None);
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
