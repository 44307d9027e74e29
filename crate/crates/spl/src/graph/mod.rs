//! The inter-commit relationship graph: cheap metadata filtering proposes
//! candidate commit pairs, the LLM endorses or rejects each one, and the
//! endorsed edges form an undirected graph consumed by the graph encoder.
//!
//! A pair qualifies as a candidate when the two commits share an author or
//! a committer and landed within a time window of each other (56 days by
//! default). Rejected pairs keep a weight-0 edge for the audit trail but
//! never enter the adjacency.

use crate::corpus::CommitRecord;
use crate::error::Result;
use crate::features::EmbeddingProvider;
use crate::feedback::{build_f2_prompt, CachedClient, PromptOptions};
use crate::util;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

pub const DEFAULT_WINDOW_DAYS: i64 = 56;
pub const DEFAULT_K_F2: usize = 8;

/// Metadata conditions a commit pair must satisfy before the LLM is asked
/// about it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CandidateFilter {
    pub window_days: i64,
}

impl Default for CandidateFilter {
    fn default() -> Self {
        Self {
            window_days: DEFAULT_WINDOW_DAYS,
        }
    }
}

impl CandidateFilter {
    /// Same author or committer, and submitted within the window
    /// (inclusive at exactly `window_days`).
    pub fn admits(&self, a: &CommitRecord, b: &CommitRecord) -> bool {
        let same_person = a.author == b.author || a.committer == b.committer;
        if !same_person {
            return false;
        }
        let delta = (a.commit_time - b.commit_time).num_seconds().abs();
        delta <= self.window_days * 86_400
    }
}

/// An unordered recorded edge; `u < v` lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GraphEdge {
    pub u: String,
    pub v: String,
    pub weight: u8,
    pub verdict_cache_key: String,
}

/// One repository's endorsed commit graph.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommitGraph {
    pub repo_id: String,
    /// commit_id -> initial node embedding
    pub node_init: BTreeMap<String, Vec<f64>>,
    /// every queried pair, endorsed or not
    pub edges: BTreeSet<GraphEdge>,
}

impl CommitGraph {
    pub fn n_nodes(&self) -> usize {
        self.node_init.len()
    }

    pub fn contains(&self, commit_id: &str) -> bool {
        self.node_init.contains_key(commit_id)
    }

    /// Neighbor lists over weight-1 edges only, symmetric by construction.
    pub fn adjacency(&self) -> BTreeMap<String, BTreeSet<String>> {
        let mut adj: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for id in self.node_init.keys() {
            adj.entry(id.clone()).or_default();
        }
        for edge in self.edges.iter().filter(|e| e.weight == 1) {
            adj.entry(edge.u.clone()).or_default().insert(edge.v.clone());
            adj.entry(edge.v.clone()).or_default().insert(edge.u.clone());
        }
        adj
    }

    pub fn n_endorsed_edges(&self) -> usize {
        self.edges.iter().filter(|e| e.weight == 1).count()
    }
}

fn ordered_pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Enumerate the unordered candidate pairs: every (seed, other) pair
/// passing the filter, deduplicated across seeds.
pub fn candidate_pairs(
    seeds: &[&CommitRecord],
    all_commits: &[&CommitRecord],
    filter: &CandidateFilter,
) -> BTreeSet<(String, String)> {
    let mut pairs = BTreeSet::new();
    for seed in seeds {
        for other in all_commits {
            if seed.commit_id == other.commit_id {
                continue;
            }
            if filter.admits(seed, other) {
                pairs.insert(ordered_pair(&seed.commit_id, &other.commit_id));
            }
        }
    }
    pairs
}

/// Ask the model about every candidate pair and assemble the graph. Nodes
/// are all seeds plus every commit appearing in a queried pair; the node
/// embedding covers the commit message and diff. Exactly one query per
/// pair (cache-first), YES giving weight 1.
pub fn build_graph(
    repo_id: &str,
    pairs: &BTreeSet<(String, String)>,
    seeds: &[&CommitRecord],
    commits_by_id: &BTreeMap<String, &CommitRecord>,
    client: &CachedClient,
    provider: &dyn EmbeddingProvider,
    opts: PromptOptions,
    workers: usize,
) -> Result<CommitGraph> {
    let pair_list: Vec<(String, String)> = pairs.iter().cloned().collect();
    let results = util::parallel_map(&pair_list, workers, |(u, v)| {
        let a = commits_by_id[u];
        let b = commits_by_id[v];
        let prompt = build_f2_prompt(a, b, opts)?;
        let (verdict, cache_key) = client.query(&prompt)?;
        Ok(GraphEdge {
            u: u.clone(),
            v: v.clone(),
            weight: verdict.bit() as u8,
            verdict_cache_key: cache_key,
        })
    })?;

    let mut graph = CommitGraph {
        repo_id: repo_id.to_string(),
        ..CommitGraph::default()
    };
    let mut node_ids: BTreeSet<String> = seeds.iter().map(|c| c.commit_id.clone()).collect();
    for (u, v) in &pair_list {
        node_ids.insert(u.clone());
        node_ids.insert(v.clone());
    }
    for id in node_ids {
        let commit = commits_by_id[&id];
        let text = format!("{}\n{}", commit.message, commit.diff_text());
        graph.node_init.insert(id, provider.embed(&text));
    }
    graph.edges = results.into_iter().collect();
    Ok(graph)
}

/// Fraction of CVEs with at least one labeled patch in the top `k`, for
/// each requested `k`. Nondecreasing in `k`.
pub fn coverage_curve(
    ranked: &BTreeMap<String, Vec<String>>,
    labels: &BTreeMap<String, BTreeSet<String>>,
    ks: &[usize],
) -> Vec<(usize, f64)> {
    let n = ranked.len().max(1) as f64;
    ks.iter()
        .map(|&k| {
            let covered = ranked
                .iter()
                .filter(|(cve, commits)| {
                    let patches = match labels.get(*cve) {
                        Some(p) => p,
                        None => return false,
                    };
                    commits.iter().take(k).any(|c| patches.contains(c))
                })
                .count();
            (k, covered as f64 / n)
        })
        .collect()
}

/// For each window, the share of co-patch pairs the filter keeps and the
/// number of LLM queries it would cost over the whole commit set. Both
/// series are nondecreasing in the window.
pub fn window_tradeoff(
    commits: &[&CommitRecord],
    co_patch_pairs: &BTreeSet<(String, String)>,
    windows: &[i64],
) -> Vec<(i64, f64, usize)> {
    let by_id: BTreeMap<&str, &CommitRecord> =
        commits.iter().map(|c| (c.commit_id.as_str(), *c)).collect();
    windows
        .iter()
        .map(|&window_days| {
            let filter = CandidateFilter { window_days };
            let covered = co_patch_pairs
                .iter()
                .filter(|(u, v)| match (by_id.get(u.as_str()), by_id.get(v.as_str())) {
                    (Some(a), Some(b)) => filter.admits(a, b),
                    _ => false,
                })
                .count();
            let coverage = if co_patch_pairs.is_empty() {
                0.0
            } else {
                covered as f64 / co_patch_pairs.len() as f64
            };
            let mut queries = 0usize;
            for i in 0..commits.len() {
                for j in i + 1..commits.len() {
                    if filter.admits(commits[i], commits[j]) {
                        queries += 1;
                    }
                }
            }
            (window_days, coverage, queries)
        })
        .collect()
}

/// Write `<repo>.edges.jsonl` and `<repo>.nodes.jsonl` under `dir`.
pub fn save_graph(dir: &Path, graph: &CommitGraph) -> Result<()> {
    let mut edges = String::new();
    for edge in &graph.edges {
        edges.push_str(&serde_json::to_string(edge)?);
        edges.push('\n');
    }
    util::atomic_write(&dir.join(format!("{}.edges.jsonl", graph.repo_id)), edges.as_bytes())?;
    let mut nodes = String::new();
    for (commit_id, embed) in &graph.node_init {
        nodes.push_str(&serde_json::to_string(
            &serde_json::json!({"commit_id": commit_id, "embed": embed}),
        )?);
        nodes.push('\n');
    }
    util::atomic_write(&dir.join(format!("{}.nodes.jsonl", graph.repo_id)), nodes.as_bytes())?;
    Ok(())
}

/// Load a graph persisted by [`save_graph`].
pub fn load_graph(dir: &Path, repo_id: &str) -> Result<CommitGraph> {
    let mut graph = CommitGraph {
        repo_id: repo_id.to_string(),
        ..CommitGraph::default()
    };
    let edges_text = util::read_string(&dir.join(format!("{repo_id}.edges.jsonl")))?;
    for line in edges_text.lines().filter(|l| !l.trim().is_empty()) {
        graph.edges.insert(serde_json::from_str(line)?);
    }
    let nodes_text = util::read_string(&dir.join(format!("{repo_id}.nodes.jsonl")))?;
    for line in nodes_text.lines().filter(|l| !l.trim().is_empty()) {
        let value: serde_json::Value = serde_json::from_str(line)?;
        let commit_id = value["commit_id"].as_str().unwrap_or_default().to_string();
        let embed = value["embed"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(|v| v.as_f64())
            .collect();
        graph.node_init.insert(commit_id, embed);
    }
    Ok(graph)
}

#[cfg(test)]
mod tests;
