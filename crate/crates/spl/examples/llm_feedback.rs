//! Relevance feedback end to end: prompt construction under the token
//! budget, verdict parsing, cached collection with a deterministic mock
//! analyst, and the cost model that makes top-k feedback affordable.
//!
//! ```bash
//! cargo run --example llm_feedback
//! ```

use spl::feedback::{
    build_f1_prompt, collect_f1, estimate_cost, parse_verdict, CachedClient, MockLlm, MockOracle,
    PromptOptions, VerdictCache,
};
use spl::synthetic::{generate, SyntheticConfig};
use std::collections::BTreeMap;
use std::sync::Arc;

fn main() -> spl::Result<()> {
    let corpus = generate(&SyntheticConfig::default());
    let cve = corpus.cves.values().next().unwrap();
    let repo = corpus.repo_of(&cve.cve_id).unwrap();
    let patch_id = &corpus.patches_of(&cve.cve_id)[0];
    let patch = corpus.commit(repo, patch_id).unwrap();

    // a four-part prompt, always within the hard token budget
    let prompt = build_f1_prompt(cve, patch, PromptOptions::default());
    println!("prompt (~{} tokens, budget 4097):", prompt.token_estimate);
    println!("---\n{}\n---", prompt.render());

    for raw in ["The change clearly guards the read.\nYES", "hard to say\nUNKNOWN", "nope"] {
        let verdict = parse_verdict(raw);
        println!(
            "verdict {:?} (parsed ok: {}, feedback bit: {})",
            verdict.value,
            verdict.parse_ok,
            verdict.bit()
        );
    }

    // mock analyst with the observed error profile; answers are a pure
    // function of (seed, pair), so reruns agree
    let oracle = MockOracle::from_corpus(&corpus);
    let mock = Arc::new(MockLlm::with_error_rates(oracle, 0.13, 0.13, 7));
    let cache_dir = tempfile::tempdir().expect("tempdir");
    let client = CachedClient::new(mock, VerdictCache::new(cache_dir.path()));

    // feedback for the top 10 "ranked" commits of one CVE (here: the
    // repo's commits in id order, patch pinned first, standing in for a
    // stage-1 ranking)
    let mut ranked = BTreeMap::new();
    let mut candidates = vec![patch_id.clone()];
    candidates.extend(
        corpus.commits[repo]
            .keys()
            .filter(|id| *id != patch_id)
            .take(9)
            .cloned(),
    );
    ranked.insert(cve.cve_id.clone(), candidates);

    let f1 = collect_f1(&ranked, &corpus, 10, &client, PromptOptions::default(), 2)?;
    println!("\nfeedback bits for {}:", cve.cve_id);
    for entry in &f1.per_cve[&cve.cve_id] {
        println!("  {} -> {}", &entry.commit_id[..8], entry.bit as u8);
    }
    println!("client calls: {}", client.client_calls());

    // rerun: the cache answers everything
    let again = collect_f1(&ranked, &corpus, 10, &client, PromptOptions::default(), 2)?;
    assert_eq!(again, f1);
    println!("after warm rerun: {} calls, {} cache hits", client.client_calls(), client.cache_hits());

    // the cost model behind the top-k design
    for (n_f1, n_f2, label) in [
        (191_500, 0, "relevance feedback at k=100 over 1,915 CVEs"),
        (191_500, 165_667, "plus the windowed relation queries"),
        (3_121_000, 0, "naive: every pair through the model"),
    ] {
        let c = estimate_cost(n_f1, n_f2);
        println!("{label}: {:.2} USD, {:.1} days serial", c.usd, c.est_wallclock_seconds / 86_400.0);
    }
    Ok(())
}
