//! Generate the synthetic benchmark corpus and write it as the three
//! JSONL files every other tool consumes.
//!
//! ```bash
//! cargo run --example generate_corpus -- out/corpus [seed]
//! ```

use spl::corpus::partition_by_cardinality;
use spl::synthetic::{generate_to_dir, SyntheticConfig};
use std::path::PathBuf;

fn main() -> spl::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/corpus".into()));
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    let config = SyntheticConfig { seed, ..SyntheticConfig::default() };
    let corpus = generate_to_dir(&config, &out)?;
    let (one_one, one_n) = partition_by_cardinality(&corpus);
    println!(
        "wrote {} CVEs ({} single-patch, {} multi-patch), {} commits across {} repos to {}",
        corpus.cves.len(),
        one_one.len(),
        one_n.len(),
        corpus.n_commits(),
        corpus.commits.len(),
        out.display()
    );

    let sample = corpus.cves.values().next().expect("non-empty corpus");
    println!("\nsample CVE {}:\n  {}", sample.cve_id, sample.description);
    for patch in corpus.patches_of(&sample.cve_id) {
        let repo = corpus.repo_of(&sample.cve_id).unwrap();
        let commit = corpus.commit(repo, &patch).unwrap();
        println!("  patch {}: {}", &patch[..8.min(patch.len())], commit.message);
    }
    Ok(())
}
