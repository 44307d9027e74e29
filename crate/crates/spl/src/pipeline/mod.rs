//! Three-stage orchestration.
//!
//! Stage 1 trains the base ranker on the pair features alone and collects
//! LLM relevance feedback on each CVE's top-k commits. Stage 2 retrains
//! with the feedback bit appended, then builds the endorsed inter-commit
//! graph from the improved ranking's top commits. Stage 3 trains the
//! joint model (numerical + graph encoders) and emits the final ranking.
//!
//! Artifacts land under one run directory: per-fold feature tables,
//! per-stage checkpoints and ranking CSVs, the feedback assignment, the
//! per-repo graphs, the evaluation report and a manifest that makes
//! reruns resumable.

pub mod config;
pub mod manifest;
pub mod run;

pub use config::{EmbeddingConfig, FeatureSet, LlmConfig, ModelConfig, PipelineConfig};
pub use manifest::RunManifest;
pub use run::Pipeline;

use crate::error::{Error, Result};
use crate::eval::RankedLists;
use crate::util;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Ranking0,
    Ranking1,
    Ranking2,
}

impl Stage {
    pub fn file_name(&self) -> &'static str {
        match self {
            Stage::Ranking0 => "ranking0.csv",
            Stage::Ranking1 => "ranking1.csv",
            Stage::Ranking2 => "ranking2.csv",
        }
    }
}

/// Scored candidate commits per CVE, sorted by descending score with ties
/// broken by ascending commit id.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub stage: Stage,
    pub per_cve: BTreeMap<String, Vec<(String, f64)>>,
}

impl Ranking {
    pub fn new(stage: Stage) -> Self {
        Self {
            stage,
            per_cve: BTreeMap::new(),
        }
    }

    /// Insert one CVE's scored candidates; sorts with the deterministic
    /// tie-break.
    pub fn insert(&mut self, cve_id: &str, mut scored: Vec<(String, f64)>) {
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        self.per_cve.insert(cve_id.to_string(), scored);
    }

    /// Commit ids in rank order per CVE.
    pub fn ranked_ids(&self) -> RankedLists {
        self.per_cve
            .iter()
            .map(|(cve, list)| (cve.clone(), list.iter().map(|(id, _)| id.clone()).collect()))
            .collect()
    }

    /// The top k commit ids per CVE.
    pub fn top_k(&self, k: usize) -> BTreeMap<String, Vec<String>> {
        self.per_cve
            .iter()
            .map(|(cve, list)| {
                (
                    cve.clone(),
                    list.iter().take(k).map(|(id, _)| id.clone()).collect(),
                )
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("cve_id,rank,commit_id,score\n");
        for (cve, list) in &self.per_cve {
            for (rank, (commit, score)) in list.iter().enumerate() {
                out.push_str(&format!("{cve},{},{commit},{score}\n", rank + 1));
            }
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        util::atomic_write(path, self.to_csv().as_bytes())
    }

    pub fn load_csv(path: &Path, stage: Stage) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
        let mut per_cve: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        for record in reader.records() {
            let record =
                record.map_err(|e| Error::Config(format!("bad csv in {}: {e}", path.display())))?;
            let cve = record.get(0).unwrap_or_default().to_string();
            let commit = record.get(2).unwrap_or_default().to_string();
            let score: f64 = record
                .get(3)
                .unwrap_or_default()
                .parse()
                .map_err(|e| Error::Config(format!("bad score in {}: {e}", path.display())))?;
            per_cve.entry(cve).or_default().push((commit, score));
        }
        Ok(Self { stage, per_cve })
    }
}

#[cfg(test)]
mod tests;
