//! Run manifest: a JSON record of the run's configuration digest, input
//! hashes, per-stage completion and LLM spend. Written atomically when the
//! run starts and finalized when it ends; reruns consult it to skip
//! stages whose inputs are unchanged.

use crate::error::Result;
use crate::eval::CostTally;
use crate::util;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub completed: bool,
    /// digest of the stage's inputs (config + upstream artifacts)
    pub inputs_digest: String,
    pub outputs: BTreeMap<String, String>,
    pub llm_queries: u64,
    pub wallclock_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_digest: String,
    pub corpus_digest: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub stages: BTreeMap<String, StageRecord>,
    pub cost: CostTally,
}

impl RunManifest {
    pub fn path(dir: &Path) -> PathBuf {
        dir.join("manifest.json")
    }

    pub fn create(dir: &Path, run_id: &str, config_digest: &str, corpus_digest: &str) -> Result<Self> {
        let manifest = Self {
            run_id: run_id.to_string(),
            config_digest: config_digest.to_string(),
            corpus_digest: corpus_digest.to_string(),
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: None,
            stages: BTreeMap::new(),
            cost: CostTally::default(),
        };
        manifest.save(dir)?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&util::read_file(&Self::path(dir))?)?)
    }

    /// Load the existing manifest when it matches this run's inputs,
    /// otherwise start fresh.
    pub fn load_or_create(
        dir: &Path,
        run_id: &str,
        config_digest: &str,
        corpus_digest: &str,
    ) -> Result<Self> {
        if Self::path(dir).exists() {
            if let Ok(existing) = Self::load(dir) {
                if existing.run_id == run_id
                    && existing.config_digest == config_digest
                    && existing.corpus_digest == corpus_digest
                {
                    return Ok(existing);
                }
            }
        }
        Self::create(dir, run_id, config_digest, corpus_digest)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        util::atomic_write(
            &Self::path(dir),
            serde_json::to_string_pretty(self)?.as_bytes(),
        )
    }

    /// True when `stage` already completed with identical inputs and all
    /// its recorded outputs still exist on disk.
    pub fn stage_is_fresh(&self, dir: &Path, stage: &str, inputs_digest: &str) -> bool {
        match self.stages.get(stage) {
            Some(record) => {
                record.completed
                    && record.inputs_digest == inputs_digest
                    && record.outputs.keys().all(|rel| dir.join(rel).exists())
            }
            None => false,
        }
    }

    pub fn record_stage(
        &mut self,
        dir: &Path,
        stage: &str,
        inputs_digest: &str,
        outputs: &[&Path],
        llm_queries: u64,
        wallclock_secs: f64,
    ) -> Result<()> {
        let mut map = BTreeMap::new();
        for path in outputs {
            let rel = path
                .strip_prefix(dir)
                .unwrap_or(path)
                .to_string_lossy()
                .to_string();
            let digest = util::sha256_hex(&util::read_file(path)?);
            map.insert(rel, digest);
        }
        self.stages.insert(
            stage.to_string(),
            StageRecord {
                completed: true,
                inputs_digest: inputs_digest.to_string(),
                outputs: map,
                llm_queries,
                wallclock_secs,
            },
        );
        self.save(dir)
    }

    pub fn finalize(&mut self, dir: &Path, cost: CostTally) -> Result<()> {
        self.cost = cost;
        self.finished_at = Some(chrono::Utc::now().to_rfc3339());
        self.save(dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_freshness_requires_matching_digest_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = RunManifest::create(dir.path(), "r1", "cfg", "corpus").unwrap();
        let artifact = dir.path().join("out.txt");
        util::atomic_write(&artifact, b"data").unwrap();
        manifest
            .record_stage(dir.path(), "stage1", "digest-a", &[&artifact], 3, 0.5)
            .unwrap();
        assert!(manifest.stage_is_fresh(dir.path(), "stage1", "digest-a"));
        assert!(!manifest.stage_is_fresh(dir.path(), "stage1", "digest-b"));
        std::fs::remove_file(&artifact).unwrap();
        assert!(!manifest.stage_is_fresh(dir.path(), "stage1", "digest-a"));
    }

    #[test]
    fn reload_matches_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = RunManifest::create(dir.path(), "r2", "cfg", "corpus").unwrap();
        let loaded = RunManifest::load(dir.path()).unwrap();
        assert_eq!(loaded, manifest);
        // mismatched config digest starts a fresh manifest
        let fresh = RunManifest::load_or_create(dir.path(), "r2", "other", "corpus").unwrap();
        assert!(fresh.stages.is_empty());
        assert_eq!(fresh.config_digest, "other");
    }
}
