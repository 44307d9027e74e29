use super::*;
use crate::corpus::{CommitRecord, Corpus, CveRecord, PatchLabel};
use crate::features::HashEmbedder;
use crate::feedback::{CachedClient, MockLlm, MockOracle, VerdictCache};
use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::sync::Arc;

const DAY: i64 = 86_400;

fn commit_at(id: &str, author: &str, committer: &str, secs: i64) -> CommitRecord {
    CommitRecord {
        commit_id: id.to_string(),
        repo_id: "repo".into(),
        author: author.to_string(),
        author_time: Utc.timestamp_opt(secs, 0).unwrap(),
        committer: committer.to_string(),
        commit_time: Utc.timestamp_opt(secs, 0).unwrap(),
        message: format!("work by {author}"),
        parent_ids: vec![],
        diffs: vec![],
    }
}

#[test]
fn filter_requires_person_and_window() {
    let filter = CandidateFilter::default();
    let base = commit_at("a", "alice", "carol", 1_000_000_000);
    // same author, 10 days apart: admitted
    assert!(filter.admits(&base, &commit_at("b", "alice", "dave", 1_000_000_000 + 10 * DAY)));
    // different author and committer, 1 day apart: rejected
    assert!(!filter.admits(&base, &commit_at("c", "bob", "dave", 1_000_000_000 + DAY)));
    // same committer but 57 days apart: rejected
    assert!(!filter.admits(&base, &commit_at("d", "bob", "carol", 1_000_000_000 + 57 * DAY)));
}

#[test]
fn filter_window_boundary() {
    let filter = CandidateFilter::default();
    let base = commit_at("a", "alice", "carol", 1_000_000_000);
    let at_window = commit_at("b", "alice", "x", 1_000_000_000 + 56 * DAY);
    let just_past = commit_at("c", "alice", "x", 1_000_000_000 + 56 * DAY + 1);
    assert!(filter.admits(&base, &at_window), "exactly 56 days is included");
    assert!(!filter.admits(&base, &just_past), "56 days + 1 s is excluded");
}

fn brute_force_pairs(
    seeds: &[&CommitRecord],
    all: &[&CommitRecord],
    filter: &CandidateFilter,
) -> BTreeSet<(String, String)> {
    let mut out = BTreeSet::new();
    for s in seeds {
        for o in all {
            if s.commit_id != o.commit_id && filter.admits(s, o) {
                let (u, v) = if s.commit_id <= o.commit_id {
                    (s.commit_id.clone(), o.commit_id.clone())
                } else {
                    (o.commit_id.clone(), s.commit_id.clone())
                };
                out.insert((u, v));
            }
        }
    }
    out
}

#[test]
fn candidate_pairs_match_brute_force_on_random_repos() {
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    for _ in 0..20 {
        let n = rng.random_range(2..60);
        let commits: Vec<CommitRecord> = (0..n)
            .map(|i| {
                let author = format!("a{}", rng.random_range(0..4u8));
                let committer = format!("m{}", rng.random_range(0..3u8));
                let t = 1_000_000_000 + rng.random_range(0..200) * DAY / 2;
                commit_at(&format!("c{i:03}"), &author, &committer, t)
            })
            .collect();
        let refs: Vec<&CommitRecord> = commits.iter().collect();
        let n_seeds = rng.random_range(1..=refs.len().min(8));
        let seeds: Vec<&CommitRecord> = refs[..n_seeds].to_vec();
        let filter = CandidateFilter { window_days: 56 };
        assert_eq!(
            candidate_pairs(&seeds, &refs, &filter),
            brute_force_pairs(&seeds, &refs, &filter)
        );
    }
}

fn graph_fixture() -> (Corpus, Vec<CommitRecord>) {
    let mut corpus = Corpus::default();
    corpus
        .add_cve(CveRecord {
            cve_id: "CVE-2014-8275".into(),
            description: "constraint enforcement issue".into(),
            published_time: Utc.timestamp_opt(1_000_000_000, 0).unwrap(),
            cwe_id: None,
            cwe_name: None,
            reference_urls: vec![],
        })
        .unwrap();
    let commits: Vec<CommitRecord> = (0..6)
        .map(|i| commit_at(&format!("c{i}"), "alice", "carol", 1_000_000_000 + i * DAY))
        .collect();
    for c in &commits {
        corpus.add_commit(c.clone()).unwrap();
    }
    corpus
        .add_label(PatchLabel {
            cve_id: "CVE-2014-8275".into(),
            commit_id: "c0".into(),
        })
        .unwrap();
    corpus
        .add_label(PatchLabel {
            cve_id: "CVE-2014-8275".into(),
            commit_id: "c1".into(),
        })
        .unwrap();
    (corpus, commits)
}

fn oracle_client(corpus: &Corpus, dir: &std::path::Path) -> CachedClient {
    CachedClient::new(
        Arc::new(MockLlm::exact(MockOracle::from_corpus(corpus))),
        VerdictCache::new(dir),
    )
}

#[test]
fn co_patch_pair_gets_weight_one() {
    let (corpus, commits) = graph_fixture();
    let dir = tempfile::tempdir().unwrap();
    let client = oracle_client(&corpus, dir.path());
    let provider = HashEmbedder::new(8);
    let by_id: BTreeMap<String, &CommitRecord> =
        commits.iter().map(|c| (c.commit_id.clone(), c)).collect();
    let mut pairs = BTreeSet::new();
    pairs.insert(("c0".to_string(), "c1".to_string()));
    pairs.insert(("c0".to_string(), "c2".to_string()));
    let seeds = vec![&commits[0]];
    let graph = build_graph(
        "repo",
        &pairs,
        &seeds,
        &by_id,
        &client,
        &provider,
        Default::default(),
        1,
    )
    .unwrap();
    let weights: BTreeMap<(String, String), u8> = graph
        .edges
        .iter()
        .map(|e| ((e.u.clone(), e.v.clone()), e.weight))
        .collect();
    assert_eq!(weights[&("c0".to_string(), "c1".to_string())], 1);
    assert_eq!(weights[&("c0".to_string(), "c2".to_string())], 0);
    // exactly one query per pair
    assert_eq!(client.client_calls(), 2);
    // every edge carries a stored verdict
    for edge in &graph.edges {
        assert!(client.cache.get(&edge.verdict_cache_key).unwrap().is_some());
    }
}

#[test]
fn empty_pair_set_keeps_seed_nodes_only() {
    let (corpus, commits) = graph_fixture();
    let dir = tempfile::tempdir().unwrap();
    let client = oracle_client(&corpus, dir.path());
    let provider = HashEmbedder::new(8);
    let by_id: BTreeMap<String, &CommitRecord> =
        commits.iter().map(|c| (c.commit_id.clone(), c)).collect();
    let seeds = vec![&commits[0], &commits[3]];
    let graph = build_graph(
        "repo",
        &BTreeSet::new(),
        &seeds,
        &by_id,
        &client,
        &provider,
        Default::default(),
        1,
    )
    .unwrap();
    assert_eq!(graph.n_nodes(), 2);
    assert!(graph.edges.is_empty());
    assert_eq!(client.client_calls(), 0);
}

#[test]
fn three_seeds_two_candidates_each_all_yes() {
    // six distinct pairs, all co-patches of one CVE, so the oracle
    // endorses every edge
    let mut corpus = Corpus::default();
    corpus
        .add_cve(CveRecord {
            cve_id: "CVE-2020-1000".into(),
            description: "multi patch".into(),
            published_time: Utc.timestamp_opt(1_000_000_000, 0).unwrap(),
            cwe_id: None,
            cwe_name: None,
            reference_urls: vec![],
        })
        .unwrap();
    let commits: Vec<CommitRecord> = (0..6)
        .map(|i| commit_at(&format!("c{i}"), "alice", "carol", 1_000_000_000 + i * DAY))
        .collect();
    for c in &commits {
        corpus.add_commit(c.clone()).unwrap();
        corpus
            .add_label(PatchLabel {
                cve_id: "CVE-2020-1000".into(),
                commit_id: c.commit_id.clone(),
            })
            .unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let client = oracle_client(&corpus, dir.path());
    let provider = HashEmbedder::new(8);
    let by_id: BTreeMap<String, &CommitRecord> =
        commits.iter().map(|c| (c.commit_id.clone(), c)).collect();
    let mut pairs = BTreeSet::new();
    for (seed, cands) in [("c0", ["c3", "c4"]), ("c1", ["c4", "c5"]), ("c2", ["c3", "c5"])] {
        for cand in cands {
            pairs.insert((seed.to_string().min(cand.to_string()), seed.to_string().max(cand.to_string())));
        }
    }
    assert_eq!(pairs.len(), 6);
    let seeds: Vec<&CommitRecord> = commits[..3].iter().collect();
    let graph = build_graph(
        "repo", &pairs, &seeds, &by_id, &client, &provider, Default::default(), 2,
    )
    .unwrap();
    assert_eq!(graph.n_endorsed_edges(), 6);
    assert_eq!(client.client_calls(), 6);
    // adjacency is symmetric
    let adj = graph.adjacency();
    for (node, neighbors) in &adj {
        for n in neighbors {
            assert!(adj[n].contains(node));
        }
    }
}

#[test]
fn coverage_curve_basics() {
    let mut ranked = BTreeMap::new();
    let mut labels = BTreeMap::new();
    for i in 0..4 {
        let cve = format!("CVE-2020-{:04}", i + 1);
        ranked.insert(cve.clone(), vec!["p".to_string(), "x".to_string(), "y".to_string()]);
        labels.insert(cve, BTreeSet::from(["p".to_string()]));
    }
    let curve = coverage_curve(&ranked, &labels, &[1, 2, 3]);
    assert!(curve.iter().all(|&(_, frac)| frac == 1.0));

    // patch at rank 3 for one CVE: curve rises with k
    ranked.insert(
        "CVE-2020-0001".into(),
        vec!["x".into(), "y".into(), "p".into()],
    );
    let curve = coverage_curve(&ranked, &labels, &[1, 2, 3]);
    assert_eq!(curve[0].1, 0.75);
    assert_eq!(curve[2].1, 1.0);
    for w in curve.windows(2) {
        assert!(w[1].1 >= w[0].1, "coverage must be nondecreasing");
    }
}

#[test]
fn window_tradeoff_counts_by_hand() {
    // co-patch pairs with gaps of 1, 30 and 60 days, same author
    let commits = vec![
        commit_at("a0", "alice", "x", 1_000_000_000),
        commit_at("a1", "alice", "x", 1_000_000_000 + DAY),
        commit_at("b0", "bob", "y", 2_000_000_000),
        commit_at("b1", "bob", "y", 2_000_000_000 + 30 * DAY),
        commit_at("d0", "dora", "z", 3_000_000_000),
        commit_at("d1", "dora", "z", 3_000_000_000 + 60 * DAY),
    ];
    let refs: Vec<&CommitRecord> = commits.iter().collect();
    let co_patches: BTreeSet<(String, String)> = [
        ("a0".to_string(), "a1".to_string()),
        ("b0".to_string(), "b1".to_string()),
        ("d0".to_string(), "d1".to_string()),
    ]
    .into();
    let rows = window_tradeoff(&refs, &co_patches, &[1, 30, 60]);
    let coverages: Vec<f64> = rows.iter().map(|r| r.1).collect();
    assert!((coverages[0] - 1.0 / 3.0).abs() < 1e-12);
    assert!((coverages[1] - 2.0 / 3.0).abs() < 1e-12);
    assert!((coverages[2] - 1.0).abs() < 1e-12);
    // query count nondecreasing with the window
    assert!(rows[0].2 <= rows[1].2 && rows[1].2 <= rows[2].2);
    // at window 0 only same-timestamp pairs qualify
    let zero = window_tradeoff(&refs, &co_patches, &[0]);
    assert_eq!(zero[0].1, 0.0);
}

#[test]
fn graph_roundtrips_through_jsonl() {
    let (corpus, commits) = graph_fixture();
    let dir = tempfile::tempdir().unwrap();
    let client = oracle_client(&corpus, dir.path());
    let provider = HashEmbedder::new(8);
    let by_id: BTreeMap<String, &CommitRecord> =
        commits.iter().map(|c| (c.commit_id.clone(), c)).collect();
    let mut pairs = BTreeSet::new();
    pairs.insert(("c0".to_string(), "c1".to_string()));
    let seeds = vec![&commits[0]];
    let graph = build_graph(
        "repo", &pairs, &seeds, &by_id, &client, &provider, Default::default(), 1,
    )
    .unwrap();
    let out = tempfile::tempdir().unwrap();
    save_graph(out.path(), &graph).unwrap();
    let loaded = load_graph(out.path(), "repo").unwrap();
    assert_eq!(loaded, graph);
}
