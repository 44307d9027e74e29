//! Build the endorsed inter-commit graph for one repository: metadata
//! filtering proposes candidate pairs, the (mock) analyst endorses edges,
//! and the analysis curves show why k=8 seeds and a 56-day window pay off.
//!
//! ```bash
//! cargo run --example commit_graph
//! ```

use spl::corpus::partition_by_cardinality;
use spl::features::HashEmbedder;
use spl::feedback::{CachedClient, MockLlm, MockOracle, VerdictCache};
use spl::graph::{build_graph, candidate_pairs, coverage_curve, window_tradeoff, CandidateFilter};
use spl::synthetic::{generate, SyntheticConfig};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

fn main() -> spl::Result<()> {
    let corpus = generate(&SyntheticConfig::default());
    let (_, one_n) = partition_by_cardinality(&corpus);

    // pick a repo holding a multi-patch CVE
    let cve_id = one_n.iter().next().unwrap();
    let repo = corpus.repo_of(cve_id).unwrap().to_string();
    let commits: Vec<_> = corpus.commits[&repo].values().collect();
    let patches = corpus.patches_of(cve_id);
    println!("repo {repo}: {} commits; {} has patches {:?}", commits.len(), cve_id,
        patches.iter().map(|p| &p[..8]).collect::<Vec<_>>());

    // seeds: pretend the improved ranking put the patches on top
    let seeds: Vec<_> = patches
        .iter()
        .filter_map(|id| corpus.commit(&repo, id))
        .collect();
    let filter = CandidateFilter::default();
    let pairs = candidate_pairs(&seeds, &commits, &filter);
    println!(
        "candidate filter (same author/committer, <= {} days): {} pairs to query",
        filter.window_days,
        pairs.len()
    );

    let oracle = MockOracle::from_corpus(&corpus);
    let client = CachedClient::new(
        Arc::new(MockLlm::exact(oracle)),
        VerdictCache::new(tempfile::tempdir().expect("tempdir").path()),
    );
    let provider = HashEmbedder::new(64);
    let by_id: BTreeMap<String, _> = commits.iter().map(|c| (c.commit_id.clone(), *c)).collect();
    let graph = build_graph(&repo, &pairs, &seeds, &by_id, &client, &provider, Default::default(), 2)?;
    println!(
        "graph: {} nodes, {} queried pairs, {} endorsed edges",
        graph.n_nodes(),
        graph.edges.len(),
        graph.n_endorsed_edges()
    );
    for edge in graph.edges.iter().filter(|e| e.weight == 1) {
        println!("  endorsed: {} -- {}", &edge.u[..8], &edge.v[..8]);
    }

    // coverage of a made-up ranking at increasing depth
    let labels = corpus.labels_by_cve();
    let mut ranked = BTreeMap::new();
    for (cve, patch_set) in &labels {
        let repo = corpus.repo_of(cve).unwrap();
        let mut list: Vec<String> = patch_set.iter().cloned().collect();
        list.extend(corpus.commits[repo].keys().filter(|c| !patch_set.contains(*c)).cloned());
        ranked.insert(cve.clone(), list);
    }
    println!("\ncoverage of an ideal ranking (share of CVEs with a patch in top k):");
    for (k, frac) in coverage_curve(&ranked, &labels, &[1, 2, 4, 8, 16]) {
        println!("  k={k:<3} coverage={:.2}%", frac * 100.0);
    }

    // window trade-off over the whole corpus: co-patch coverage vs queries
    let mut co_patches = BTreeSet::new();
    let mut all_commits = Vec::new();
    for repo_commits in corpus.commits.values() {
        all_commits.extend(repo_commits.values());
    }
    for (_, patch_set) in labels.iter().filter(|(_, p)| p.len() >= 2) {
        let v: Vec<_> = patch_set.iter().collect();
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                let (a, b) = (v[i].clone(), v[j].clone());
                co_patches.insert(if a <= b { (a, b) } else { (b, a) });
            }
        }
    }
    println!("\nwindow trade-off (co-patch coverage vs query count):");
    for (window, coverage, queries) in
        window_tradeoff(&all_commits, &co_patches, &[7, 14, 28, 56, 112])
    {
        println!("  {window:>3} days: coverage {:.0}%, {queries} queries", coverage * 100.0);
    }
    Ok(())
}
