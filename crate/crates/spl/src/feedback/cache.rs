//! On-disk verdict cache keyed by prompt hash. One JSON file per prompt
//! under `<dir>/<sha256(prompt)>.json`; writes are write-then-rename so a
//! concurrent worker pool can share the directory safely.

use super::{parse_verdict, LlmClient, Prompt, Verdict};
use crate::error::Result;
use crate::util;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub prompt: String,
    pub response: String,
    pub verdict: String,
    pub timestamp: String,
    pub model_id: String,
}

#[derive(Debug, Clone)]
pub struct VerdictCache {
    dir: PathBuf,
}

impl VerdictCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<CacheEntry>> {
        let path = self.path_for(key);
        if !path.exists() {
            return Ok(None);
        }
        let entry: CacheEntry = serde_json::from_slice(&util::read_file(&path)?)?;
        Ok(Some(entry))
    }

    pub fn put(&self, key: &str, entry: &CacheEntry) -> Result<()> {
        util::atomic_write(&self.path_for(key), serde_json::to_string_pretty(entry)?.as_bytes())
    }
}

/// Cache-first client: an identical prompt never reaches the inner client
/// twice. Every verdict handed out is backed by a stored cache entry, so
/// feedback bits stay auditable and interrupted runs resume for free.
pub struct CachedClient {
    pub client: Arc<dyn LlmClient>,
    pub cache: VerdictCache,
    client_calls: AtomicU64,
    cache_hits: AtomicU64,
}

impl CachedClient {
    pub fn new(client: Arc<dyn LlmClient>, cache: VerdictCache) -> Self {
        Self {
            client,
            cache,
            client_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    /// Returns the verdict and the cache key justifying it.
    pub fn query(&self, prompt: &Prompt) -> Result<(Verdict, String)> {
        let key = prompt.cache_key();
        if let Some(entry) = self.cache.get(&key)? {
            self.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok((parse_verdict(&entry.response), key));
        }
        let response = self.client.complete(prompt)?;
        let verdict = parse_verdict(&response);
        if !verdict.parse_ok {
            log::warn!("unparseable llm response for {key}; treating as UNKNOWN");
        }
        let entry = CacheEntry {
            prompt: prompt.render(),
            response,
            verdict: format!("{:?}", verdict.value).to_uppercase(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            model_id: self.client.model_id(),
        };
        self.cache.put(&key, &entry)?;
        self.client_calls.fetch_add(1, Ordering::Relaxed);
        Ok((verdict, key))
    }

    pub fn client_calls(&self) -> u64 {
        self.client_calls.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::Relaxed)
    }
}
