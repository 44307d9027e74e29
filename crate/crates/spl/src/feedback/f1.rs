//! Relevance-feedback collection: query the model once per (CVE, top-k
//! commit) pair and record the bits. Commits outside the top k default to
//! a 0 bit.

use super::{build_f1_prompt, CachedClient, PromptOptions};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::util;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Entry {
    pub commit_id: String,
    pub bit: bool,
    /// cache key of the verdict justifying this bit
    pub cache_key: String,
}

/// Per-CVE feedback bits over the top `k` commits of the stage-1 ranking.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct F1Assignment {
    pub k: usize,
    pub per_cve: BTreeMap<String, Vec<F1Entry>>,
}

impl F1Assignment {
    /// The feedback bit for a pair; 0 for anything outside the queried
    /// top k.
    pub fn bit(&self, cve_id: &str, commit_id: &str) -> bool {
        self.per_cve
            .get(cve_id)
            .map(|entries| entries.iter().any(|e| e.commit_id == commit_id && e.bit))
            .unwrap_or(false)
    }

    pub fn n_queries(&self) -> usize {
        self.per_cve.values().map(Vec::len).sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::atomic_write(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&util::read_file(path)?)?)
    }
}

/// Query the client (cache-first) for every CVE's top `k` ranked commits.
/// `ranked` maps cve_id to its commit ids in rank order.
pub fn collect_f1(
    ranked: &BTreeMap<String, Vec<String>>,
    corpus: &Corpus,
    k: usize,
    client: &CachedClient,
    opts: PromptOptions,
    workers: usize,
) -> Result<F1Assignment> {
    let mut jobs = Vec::new();
    for (cve_id, commits) in ranked {
        for commit_id in commits.iter().take(k) {
            jobs.push((cve_id.clone(), commit_id.clone()));
        }
    }
    let results = util::parallel_map(&jobs, workers, |(cve_id, commit_id)| {
        let cve = corpus
            .cves
            .get(cve_id)
            .ok_or_else(|| Error::NotFound(format!("cve {cve_id}")))?;
        let repo = corpus
            .repo_of(cve_id)
            .ok_or_else(|| Error::NotFound(format!("repo of {cve_id}")))?;
        let commit = corpus
            .commit(repo, commit_id)
            .ok_or_else(|| Error::NotFound(format!("commit {repo}/{commit_id}")))?;
        let prompt = build_f1_prompt(cve, commit, opts);
        let (verdict, cache_key) = client.query(&prompt)?;
        Ok(F1Entry {
            commit_id: commit_id.clone(),
            bit: verdict.bit(),
            cache_key,
        })
    })?;
    let mut assignment = F1Assignment {
        k,
        per_cve: BTreeMap::new(),
    };
    for ((cve_id, _), entry) in jobs.into_iter().zip(results) {
        assignment.per_cve.entry(cve_id).or_default().push(entry);
    }
    Ok(assignment)
}

/// Number of F1 queries a plan would issue: min(k, candidates) per CVE.
pub fn planned_f1_queries(ranked: &BTreeMap<String, Vec<String>>, k: usize) -> usize {
    ranked.values().map(|commits| commits.len().min(k)).sum()
}
