//! Walk through feature extraction for one (CVE, commit) pair: shared
//! tokenization, tf-idf similarity, file/function overlap and the rest of
//! the handcrafted feature vector.
//!
//! ```bash
//! cargo run --example extract_features
//! ```

use spl::features::{
    build_corpus_stats, tokenize_text, FeatureExtractor, HashEmbedder, Lexicon,
};
use spl::synthetic::{generate, SyntheticConfig};

fn main() {
    let corpus = generate(&SyntheticConfig::default());

    // statistics must come from training data; here, every CVE
    let stats = build_corpus_stats(&corpus, corpus.cves.keys().map(String::as_str));
    println!(
        "corpus statistics: {} documents, {} distinct tokens",
        stats.n_docs,
        stats.df.len()
    );

    let cve = corpus.cves.values().next().expect("non-empty corpus");
    println!("\ntokenizing: {:?}", &cve.description[..60.min(cve.description.len())]);
    let tokens = tokenize_text(&cve.description);
    println!("first tokens: {:?}", &tokens[..12.min(tokens.len())]);

    let provider = HashEmbedder::new(64);
    let lexicon = Lexicon::builtin();
    let extractor = FeatureExtractor::new(&stats, &provider, &lexicon);

    let repo = corpus.repo_of(&cve.cve_id).unwrap();
    // the primary patch is the earliest labeled commit
    let patch = corpus
        .patches_of(&cve.cve_id)
        .iter()
        .filter_map(|id| corpus.commit(repo, id))
        .min_by_key(|c| c.commit_time)
        .unwrap()
        .clone();
    let patch_id = patch.commit_id.clone();
    let patch = &patch;
    let background = corpus
        .commits[repo]
        .values()
        .find(|c| c.commit_id != patch_id)
        .unwrap();

    for (name, commit) in [("labeled patch", patch), ("background commit", background)] {
        let f0 = extractor.extract(cve, commit);
        f0.validate().expect("extracted vector satisfies its constraints");
        println!("\n{name} ({}):", commit.message);
        for feature in [
            "same_file_num",
            "same_function_num",
            "cve_match",
            "tfidf_similarity",
            "shared_msg_word_num",
            "vuln_type_relevance",
            "time_interval",
        ] {
            println!("  {feature:<22} = {}", f0.get(feature));
        }
        println!("  text embeddings: 2 x {} dims", f0.text_embed_cve.len());
    }
}
