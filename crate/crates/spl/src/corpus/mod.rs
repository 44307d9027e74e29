//! Corpus data model: CVEs, commits, patch labels, negative sampling and
//! cross-validation folds.
//!
//! The on-disk layout is three JSONL files in one directory:
//!
//! ```text
//! corpus/
//!   cves.jsonl     {"cve_id","description","published_time","cwe_id","cwe_name","reference_urls":[...]}
//!   commits.jsonl  {"commit_id","repo_id","author","author_time","committer","commit_time",
//!                   "message","parents":[...],"diffs":[{"file_path","added":[...],"deleted":[...],"hunks":[...]}]}
//!   labels.jsonl   {"cve_id","commit_id"}
//! ```
//!
//! A label marks a commit as a patch for a CVE. A CVE with one label is a
//! "1-1" case; two or more labels make it "1-N" (several commits jointly
//! fix the vulnerability).

pub mod ingest;

use crate::error::{Error, Result};
use crate::util;
use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

/// One CVE entry as analyzed by the ranker.
///
/// `reference_urls` exist only to justify labels; they are never fed to
/// feature extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CveRecord {
    pub cve_id: String,
    pub description: String,
    pub published_time: DateTime<Utc>,
    #[serde(default)]
    pub cwe_id: Option<String>,
    #[serde(default)]
    pub cwe_name: Option<String>,
    #[serde(default)]
    pub reference_urls: Vec<String>,
}

/// One file's changes within a commit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDiff {
    pub file_path: String,
    #[serde(rename = "added", default)]
    pub added_lines: Vec<String>,
    #[serde(rename = "deleted", default)]
    pub deleted_lines: Vec<String>,
    #[serde(rename = "hunks", default)]
    pub hunk_headers: Vec<String>,
}

/// One commit: message, per-file diffs and the metadata the candidate
/// filter needs (author/committer identities and timestamps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub commit_id: String,
    pub repo_id: String,
    pub author: String,
    pub author_time: DateTime<Utc>,
    pub committer: String,
    pub commit_time: DateTime<Utc>,
    pub message: String,
    #[serde(rename = "parents", default)]
    pub parent_ids: Vec<String>,
    #[serde(default)]
    pub diffs: Vec<FileDiff>,
}

impl CommitRecord {
    /// All added and deleted lines joined, used as the commit's "code text".
    pub fn diff_text(&self) -> String {
        let mut out = String::new();
        for diff in &self.diffs {
            let _ = writeln!(out, "{}", diff.file_path);
            for header in &diff.hunk_headers {
                let _ = writeln!(out, "{header}");
            }
            for line in &diff.added_lines {
                let _ = writeln!(out, "{line}");
            }
            for line in &diff.deleted_lines {
                let _ = writeln!(out, "{line}");
            }
        }
        out
    }
}

/// Marks `commit_id` as a patch for `cve_id`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PatchLabel {
    pub cve_id: String,
    pub commit_id: String,
}

/// A (cve, commit, label) training pair produced by negative sampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPair {
    pub cve_id: String,
    pub commit_id: String,
    pub label: bool,
}

/// The loaded corpus. Immutable after `load`; share it freely.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub cves: BTreeMap<String, CveRecord>,
    /// repo_id -> commit_id -> record
    pub commits: BTreeMap<String, BTreeMap<String, CommitRecord>>,
    pub labels: BTreeSet<PatchLabel>,
    pub cve_repo: BTreeMap<String, String>,
}

/// Assignment of every CVE to one cross-validation fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub n_folds: usize,
    pub fold_of: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn cves_in_fold(&self, fold: usize) -> Vec<String> {
        self.fold_of
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(cve, _)| cve.clone())
            .collect()
    }

    pub fn cves_outside_fold(&self, fold: usize) -> Vec<String> {
        self.fold_of
            .iter()
            .filter(|(_, &f)| f != fold)
            .map(|(cve, _)| cve.clone())
            .collect()
    }
}

fn cve_id_regex() -> &'static regex::Regex {
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    RE.get_or_init(|| regex::Regex::new(r"^CVE-\d{4}-\d{4,}$").expect("static regex"))
}

impl Corpus {
    /// Insert a CVE, rejecting duplicates and malformed ids.
    pub fn add_cve(&mut self, cve: CveRecord) -> Result<()> {
        if !cve_id_regex().is_match(&cve.cve_id) {
            return Err(Error::CorpusInvariant(format!(
                "cve id {:?} does not match CVE-\\d{{4}}-\\d{{4,}}",
                cve.cve_id
            )));
        }
        if cve.description.is_empty() {
            return Err(Error::CorpusInvariant(format!(
                "cve {} has an empty description",
                cve.cve_id
            )));
        }
        if self.cves.contains_key(&cve.cve_id) {
            return Err(Error::DuplicateId(cve.cve_id));
        }
        self.cves.insert(cve.cve_id.clone(), cve);
        Ok(())
    }

    /// Insert a commit, rejecting duplicates within its repo.
    pub fn add_commit(&mut self, commit: CommitRecord) -> Result<()> {
        if commit.commit_id.is_empty() {
            return Err(Error::CorpusInvariant("empty commit id".into()));
        }
        let repo = self.commits.entry(commit.repo_id.clone()).or_default();
        if repo.contains_key(&commit.commit_id) {
            return Err(Error::DuplicateId(format!(
                "{}/{}",
                commit.repo_id, commit.commit_id
            )));
        }
        repo.insert(commit.commit_id.clone(), commit);
        Ok(())
    }

    /// Insert a label; both endpoints must already exist.
    pub fn add_label(&mut self, label: PatchLabel) -> Result<()> {
        if !self.cves.contains_key(&label.cve_id) {
            return Err(Error::DanglingLabel {
                cve_id: label.cve_id,
                commit_id: label.commit_id,
            });
        }
        let repo_id = self
            .commits
            .iter()
            .find(|(_, commits)| commits.contains_key(&label.commit_id))
            .map(|(repo, _)| repo.clone())
            .ok_or_else(|| Error::DanglingLabel {
                cve_id: label.cve_id.clone(),
                commit_id: label.commit_id.clone(),
            })?;
        if let Some(existing) = self.cve_repo.get(&label.cve_id) {
            if *existing != repo_id {
                return Err(Error::CorpusInvariant(format!(
                    "cve {} labeled across repos {} and {}",
                    label.cve_id, existing, repo_id
                )));
            }
        } else {
            self.cve_repo.insert(label.cve_id.clone(), repo_id);
        }
        if !self.labels.insert(label.clone()) {
            return Err(Error::DuplicateId(format!(
                "label {}:{}",
                label.cve_id, label.commit_id
            )));
        }
        Ok(())
    }

    /// Every CVE must carry at least one label.
    pub fn validate(&self) -> Result<()> {
        for cve_id in self.cves.keys() {
            if !self.cve_repo.contains_key(cve_id) {
                return Err(Error::CorpusInvariant(format!(
                    "cve {cve_id} has no labeled patch"
                )));
            }
        }
        Ok(())
    }

    pub fn repo_of(&self, cve_id: &str) -> Option<&str> {
        self.cve_repo.get(cve_id).map(String::as_str)
    }

    pub fn commit(&self, repo_id: &str, commit_id: &str) -> Option<&CommitRecord> {
        self.commits.get(repo_id)?.get(commit_id)
    }

    /// Labeled patch commit ids for one CVE, sorted.
    pub fn patches_of(&self, cve_id: &str) -> Vec<String> {
        self.labels
            .iter()
            .filter(|l| l.cve_id == cve_id)
            .map(|l| l.commit_id.clone())
            .collect()
    }

    /// cve_id -> set of labeled patch commit ids.
    pub fn labels_by_cve(&self) -> BTreeMap<String, BTreeSet<String>> {
        let mut map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for label in &self.labels {
            map.entry(label.cve_id.clone())
                .or_default()
                .insert(label.commit_id.clone());
        }
        map
    }

    pub fn n_commits(&self) -> usize {
        self.commits.values().map(BTreeMap::len).sum()
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = util::read_string(path)?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            path: path.display().to_string(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

fn write_jsonl<T: Serialize>(path: &Path, records: impl Iterator<Item = T>) -> Result<()> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    util::atomic_write(path, out.as_bytes())
}

/// Load `cves.jsonl`, `commits.jsonl` and `labels.jsonl` from `dir` and
/// check all corpus invariants.
pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    for cve in read_jsonl::<CveRecord>(&dir.join("cves.jsonl"))? {
        corpus.add_cve(cve)?;
    }
    for commit in read_jsonl::<CommitRecord>(&dir.join("commits.jsonl"))? {
        corpus.add_commit(commit)?;
    }
    for label in read_jsonl::<PatchLabel>(&dir.join("labels.jsonl"))? {
        corpus.add_label(label)?;
    }
    corpus.validate()?;
    Ok(corpus)
}

/// Write the corpus back to the three JSONL files.
pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    write_jsonl(&dir.join("cves.jsonl"), corpus.cves.values())?;
    write_jsonl(
        &dir.join("commits.jsonl"),
        corpus.commits.values().flat_map(BTreeMap::values),
    )?;
    write_jsonl(&dir.join("labels.jsonl"), corpus.labels.iter())?;
    Ok(())
}

/// Build training pairs: every labeled patch is a positive; up to
/// `max_per_cve` other commits from the CVE's repo are drawn uniformly
/// without replacement as negatives. Deterministic under `seed`, and
/// independent of CVE iteration order (each CVE gets its own stream).
pub fn sample_negatives(corpus: &Corpus, max_per_cve: usize, seed: u64) -> Vec<LabeledPair> {
    let labels = corpus.labels_by_cve();
    let mut pairs = Vec::new();
    for (cve_id, patches) in &labels {
        let repo_id = match corpus.repo_of(cve_id) {
            Some(r) => r,
            None => continue,
        };
        for commit_id in patches {
            pairs.push(LabeledPair {
                cve_id: cve_id.clone(),
                commit_id: commit_id.clone(),
                label: true,
            });
        }
        let mut candidates: Vec<&String> = corpus.commits[repo_id]
            .keys()
            .filter(|id| !patches.contains(*id))
            .collect();
        let mut rng = ChaCha12Rng::seed_from_u64(util::stable_hash64(&[
            b"negatives",
            &seed.to_le_bytes(),
            cve_id.as_bytes(),
        ]));
        candidates.shuffle(&mut rng);
        candidates.truncate(max_per_cve);
        for commit_id in candidates {
            pairs.push(LabeledPair {
                cve_id: cve_id.clone(),
                commit_id: commit_id.clone(),
                label: false,
            });
        }
    }
    pairs
}

/// Shuffle CVE ids deterministically and deal them round-robin into
/// `n_folds` folds. Splitting at CVE granularity keeps every pair of a CVE
/// in one fold.
pub fn split_folds(corpus: &Corpus, n_folds: usize, seed: u64) -> Result<FoldAssignment> {
    if n_folds < 2 {
        return Err(Error::Config(format!("n_folds must be >= 2, got {n_folds}")));
    }
    if corpus.cves.len() < n_folds {
        return Err(Error::TooFewCves {
            n_cves: corpus.cves.len(),
            n_folds,
        });
    }
    let mut ids: Vec<String> = corpus.cves.keys().cloned().collect();
    let mut rng = ChaCha12Rng::seed_from_u64(util::stable_hash64(&[b"folds", &seed.to_le_bytes()]));
    ids.shuffle(&mut rng);
    let fold_of = ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id, i % n_folds))
        .collect();
    Ok(FoldAssignment { n_folds, fold_of })
}

/// Split CVE ids into those with exactly one label (1-1) and those with
/// two or more (1-N).
pub fn partition_by_cardinality(corpus: &Corpus) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut one_one = BTreeSet::new();
    let mut one_n = BTreeSet::new();
    for (cve_id, patches) in corpus.labels_by_cve() {
        if patches.len() >= 2 {
            one_n.insert(cve_id);
        } else {
            one_one.insert(cve_id);
        }
    }
    (one_one, one_n)
}

#[cfg(test)]
mod tests;
