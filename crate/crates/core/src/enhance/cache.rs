//! Persistent enhancement cache: an append-only JSONL file behind an
//! in-memory index keyed by `(node_id, prompt_id, input_hash)`.
//!
//! Concurrent readers share the index; appends are serialized through a
//! single writer. A single-flight latch guarantees that at most one thread
//! computes a missing key at a time, so a key can never trigger two
//! concurrent LLM calls.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::l2_norm;
use crate::graph::NodeId;

/// A cached LLM enhancement: the rewritten text and its embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnhancementRecord {
    pub node_id: NodeId,
    pub prompt_id: String,
    /// Hex SHA-256 of the rendered user message.
    pub input_hash: String,
    pub output_text: String,
    /// Unit-norm embedding of `output_text`.
    pub embedding: Vec<f64>,
    pub created_at: u64,
}

impl EnhancementRecord {
    fn validate(&self) -> Result<()> {
        if self.output_text.is_empty() {
            return Err(Error::Validation("enhancement output text is empty".into()));
        }
        let norm = l2_norm(&self.embedding);
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!(
                "enhancement embedding norm {norm}, expected 1 ± 1e-6"
            )));
        }
        Ok(())
    }

    pub fn key(&self) -> CacheKey {
        (self.node_id, self.prompt_id.clone(), self.input_hash.clone())
    }
}

pub type CacheKey = (NodeId, String, String);

#[derive(Default)]
struct InFlight {
    keys: Mutex<HashSet<CacheKey>>,
    done: Condvar,
}

/// Released when the leader finishes (successfully or not); wakes waiters so
/// they can re-check the index.
pub struct InFlightGuard<'a> {
    cache: &'a EnhancementCache,
    key: CacheKey,
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut keys = self.cache.inflight.keys.lock().unwrap();
        keys.remove(&self.key);
        self.cache.inflight.done.notify_all();
    }
}

/// Outcome of a cache lookup under the single-flight protocol.
pub enum Lookup<'a> {
    Hit(Arc<EnhancementRecord>),
    /// The caller is responsible for computing this key; the guard holds the
    /// latch until dropped.
    Miss(InFlightGuard<'a>),
}

pub struct EnhancementCache {
    path: Option<PathBuf>,
    index: RwLock<HashMap<CacheKey, Arc<EnhancementRecord>>>,
    /// File-order latest record per node, for reporting augmented features.
    latest: RwLock<HashMap<NodeId, Arc<EnhancementRecord>>>,
    writer: Mutex<Option<BufWriter<File>>>,
    inflight: InFlight,
}

impl EnhancementCache {
    /// Opens (or creates) a JSONL-backed cache and loads its index.
    pub fn open(path: &Path) -> Result<Self> {
        let mut index = HashMap::new();
        let mut latest = HashMap::new();
        if path.exists() {
            let file = File::open(path)?;
            for (idx, line) in BufReader::new(file).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: EnhancementRecord = serde_json::from_str(&line)
                    .map_err(|e| Error::parse(path, idx + 1, format!("bad cache record: {e}")))?;
                record.validate()?;
                let record = Arc::new(record);
                if index.insert(record.key(), Arc::clone(&record)).is_some() {
                    log::warn!(
                        "duplicate cache record for node {} prompt {}; keeping the later one",
                        record.node_id,
                        record.prompt_id
                    );
                }
                latest.insert(record.node_id, record);
            }
        }
        let writer = BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?);
        Ok(Self {
            path: Some(path.to_path_buf()),
            index: RwLock::new(index),
            latest: RwLock::new(latest),
            writer: Mutex::new(Some(writer)),
            inflight: InFlight::default(),
        })
    }

    /// A cache with no backing file; used by tests and pure in-process runs.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            index: RwLock::new(HashMap::new()),
            latest: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
            inflight: InFlight::default(),
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.index.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &CacheKey) -> Option<Arc<EnhancementRecord>> {
        self.index.read().unwrap().get(key).cloned()
    }

    /// Latest record per node in file/insertion order; the view used for
    /// "augmented" similarity reports.
    pub fn latest_per_node(&self) -> HashMap<NodeId, Arc<EnhancementRecord>> {
        self.latest.read().unwrap().clone()
    }

    /// Single-flight lookup: a hit returns the record; a miss makes the
    /// caller the leader for this key while everyone else blocks until the
    /// leader's guard drops.
    pub fn begin(&self, key: &CacheKey) -> Lookup<'_> {
        loop {
            if let Some(hit) = self.get(key) {
                return Lookup::Hit(hit);
            }
            let mut keys = self.inflight.keys.lock().unwrap();
            if !keys.contains(key) {
                keys.insert(key.clone());
                return Lookup::Miss(InFlightGuard {
                    cache: self,
                    key: key.clone(),
                });
            }
            // Another thread is computing this key; wait for it to finish,
            // then re-check the index.
            let _unused = self.inflight.done.wait(keys).unwrap();
        }
    }

    /// Validates, indexes, and appends a record.
    pub fn insert(&self, record: EnhancementRecord) -> Result<()> {
        record.validate()?;
        let record = Arc::new(record);
        {
            let mut writer = self.writer.lock().unwrap();
            if let Some(w) = writer.as_mut() {
                let line = serde_json::to_string(record.as_ref())
                    .map_err(|e| Error::Format(format!("encoding cache record: {e}")))?;
                w.write_all(line.as_bytes())?;
                w.write_all(b"\n")?;
                w.flush()?;
            }
        }
        self.index
            .write()
            .unwrap()
            .insert(record.key(), Arc::clone(&record));
        self.latest.write().unwrap().insert(record.node_id, record);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(node: NodeId, prompt: &str, hash: &str) -> EnhancementRecord {
        EnhancementRecord {
            node_id: node,
            prompt_id: prompt.into(),
            input_hash: hash.into(),
            output_text: "enhanced".into(),
            embedding: vec![1.0, 0.0],
            created_at: 0,
        }
    }

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let cache = EnhancementCache::open(&path).unwrap();
            cache.insert(record(3, "explain", "abc")).unwrap();
            cache.insert(record(4, "rewrite", "def")).unwrap();
        }
        let cache = EnhancementCache::open(&path).unwrap();
        assert_eq!(cache.len(), 2);
        let key = (3, "explain".to_string(), "abc".to_string());
        assert_eq!(cache.get(&key).unwrap().output_text, "enhanced");
    }

    #[test]
    fn rejects_invalid_records() {
        let cache = EnhancementCache::in_memory();
        let mut bad = record(0, "p", "h");
        bad.output_text.clear();
        assert!(cache.insert(bad).is_err());
        let mut bad = record(0, "p", "h");
        bad.embedding = vec![1.0, 1.0];
        assert!(cache.insert(bad).is_err());
    }

    #[test]
    fn single_flight_blocks_second_computation() {
        let cache = Arc::new(EnhancementCache::in_memory());
        let key: CacheKey = (7, "explain".into(), "xyz".into());

        let Lookup::Miss(guard) = cache.begin(&key) else {
            panic!("fresh cache should miss");
        };

        let cache2 = Arc::clone(&cache);
        let key2 = key.clone();
        let waiter = std::thread::spawn(move || match cache2.begin(&key2) {
            Lookup::Hit(rec) => rec.output_text.clone(),
            Lookup::Miss(_) => "second-leader".to_string(),
        });

        std::thread::sleep(std::time::Duration::from_millis(50));
        cache.insert(record(7, "explain", "xyz")).unwrap();
        drop(guard);

        assert_eq!(waiter.join().unwrap(), "enhanced");
    }

    #[test]
    fn latest_per_node_tracks_insertion_order() {
        let cache = EnhancementCache::in_memory();
        cache.insert(record(1, "explain", "h1")).unwrap();
        let mut second = record(1, "rewrite", "h2");
        second.output_text = "second".into();
        cache.insert(second).unwrap();
        assert_eq!(cache.latest_per_node()[&1].output_text, "second");
    }
}
