use super::*;
use crate::corpus::{CommitRecord, CveRecord, FileDiff};
use chrono::TimeZone;
use chrono::Utc;
use proptest::prelude::*;

fn cve(description: &str) -> CveRecord {
    CveRecord {
        cve_id: "CVE-2014-8275".into(),
        description: description.into(),
        published_time: Utc.timestamp_opt(1_600_000_000, 0).unwrap(),
        cwe_id: Some("CWE-125".into()),
        cwe_name: Some("Out-of-bounds Read".into()),
        reference_urls: vec![],
    }
}

fn commit(message: &str, files: &[(&str, &[&str])]) -> CommitRecord {
    CommitRecord {
        commit_id: "abc123".into(),
        repo_id: "repo".into(),
        author: "alice".into(),
        author_time: Utc.timestamp_opt(1_600_050_000, 0).unwrap(),
        committer: "bob".into(),
        commit_time: Utc.timestamp_opt(1_600_100_000, 0).unwrap(),
        message: message.into(),
        parent_ids: vec![],
        diffs: files
            .iter()
            .map(|(path, added)| FileDiff {
                file_path: path.to_string(),
                added_lines: added.iter().map(|s| s.to_string()).collect(),
                deleted_lines: vec![],
                hunk_headers: vec![],
            })
            .collect(),
    }
}

fn extractor_parts() -> (CorpusStats, HashEmbedder, Lexicon) {
    (CorpusStats::default(), HashEmbedder::new(8), Lexicon::builtin())
}

#[test]
fn cve_mention_sets_match_and_count() {
    let (stats, provider, lexicon) = extractor_parts();
    let ex = FeatureExtractor::new(&stats, &provider, &lexicon);
    let c = commit("Fix CVE-2014-8275 certificate fingerprints", &[("ssl/s3_srvr.c", &[])]);
    let f0 = ex.extract(&cve("OpenSSL does not enforce certain constraints"), &c);
    assert_eq!(f0.get("cve_match"), 1.0);
    assert_eq!(f0.get("cve_num"), 1.0);
    f0.validate().unwrap();
}

#[test]
fn other_cve_id_counts_but_does_not_match() {
    let (stats, provider, lexicon) = extractor_parts();
    let ex = FeatureExtractor::new(&stats, &provider, &lexicon);
    let c = commit("Backport of CVE-2019-10131 fix", &[]);
    let f0 = ex.extract(&cve("something else"), &c);
    assert_eq!(f0.get("cve_match"), 0.0);
    assert_eq!(f0.get("cve_num"), 1.0);
}

#[test]
fn file_overlap_features() {
    let (stats, provider, lexicon) = extractor_parts();
    let ex = FeatureExtractor::new(&stats, &provider, &lexicon);
    let c = commit("redirect fix", &[("url.php", &["echo 1;"])]);
    let f0 = ex.extract(
        &cve("vulnerability in the redirection feature in url.php in phpMyAdmin"),
        &c,
    );
    assert_eq!(f0.get("same_file_num"), 1.0);
    assert_eq!(f0.get("same_file_ratio"), 1.0);
    assert_eq!(f0.get("unrelated_file_num"), 0.0);
}

#[test]
fn function_mentions_from_hunks_and_description() {
    let (stats, provider, lexicon) = extractor_parts();
    let ex = FeatureExtractor::new(&stats, &provider, &lexicon);
    let mut c = commit("fix", &[("drivers/gspca/ov519.c", &["a"])]);
    c.diffs[0].hunk_headers =
        vec!["@@ -10,7 +10,8 @@ static int ov511_mode_init_regs(struct sd *sd)".into()];
    let f0 = ex.extract(
        &cve("NULL pointer dereference in the ov511_mode_init_regs function"),
        &c,
    );
    assert_eq!(f0.get("same_function_num"), 1.0);
    assert_eq!(f0.get("same_function_ratio"), 1.0);
    assert_eq!(f0.get("unrelated_function_num"), 0.0);
}

#[test]
fn identical_texts_have_unit_tfidf() {
    let (stats, provider, lexicon) = extractor_parts();
    let ex = FeatureExtractor::new(&stats, &provider, &lexicon);
    let text = "heap overflow parsing crafted packet headers";
    let c = commit(text, &[]);
    let f0 = ex.extract(&cve(text), &c);
    assert!((f0.get("tfidf_similarity") - 1.0).abs() < 1e-9);
}

#[test]
fn empty_diff_yields_zero_counts() {
    let (stats, provider, lexicon) = extractor_parts();
    let ex = FeatureExtractor::new(&stats, &provider, &lexicon);
    let f0 = ex.extract(&cve("text"), &commit("msg", &[]));
    assert_eq!(f0.get("code_added_num"), 0.0);
    assert_eq!(f0.get("same_file_ratio"), 0.0);
    f0.validate().unwrap();
}

#[test]
fn time_interval_is_signed_seconds() {
    let (stats, provider, lexicon) = extractor_parts();
    let ex = FeatureExtractor::new(&stats, &provider, &lexicon);
    let c = commit("m", &[]);
    let f0 = ex.extract(&cve("d"), &c);
    assert_eq!(f0.get("time_interval"), 100_000.0);
    // commit before publication: negative interval
    let mut early = c.clone();
    early.commit_time = Utc.timestamp_opt(1_599_000_000, 0).unwrap();
    let f0 = ex.extract(&cve("d"), &early);
    assert_eq!(f0.get("time_interval"), -1_000_000.0);
}

#[test]
fn extraction_is_pure_and_symmetric() {
    let (stats, provider, lexicon) = extractor_parts();
    let ex = FeatureExtractor::new(&stats, &provider, &lexicon);
    let desc = cve("buffer overflow in net/http.c handler");
    let a = commit("tighten bounds check", &[("net/http.c", &["if (len > cap) return;"])]);
    let mut b = a.clone();
    b.commit_id = "different-id".into();
    let fa = ex.extract(&desc, &a);
    let fb = ex.extract(&desc, &b);
    // identical content, different id: identical features
    assert_eq!(fa, fb);
    // and extraction twice gives the same answer
    assert_eq!(fa, ex.extract(&desc, &a));
}

#[test]
fn vuln_keyword_relevance_reacts_to_security_language() {
    let (stats, provider, lexicon) = extractor_parts();
    let ex = FeatureExtractor::new(&stats, &provider, &lexicon);
    let relevant = commit(
        "fix out-of-bounds read overflow",
        &[("a.c", &["bounds check added"])],
    );
    let bland = commit("update翻docs", &[("readme.md", &["typo"])]);
    let f_rel = ex.extract(&cve("x"), &relevant);
    let f_bland = ex.extract(&cve("x"), &bland);
    assert!(f_rel.get("vuln_type_relevance") > f_bland.get("vuln_type_relevance"));
}

#[test]
fn bug_match_needs_shared_bug_id() {
    let (stats, provider, lexicon) = extractor_parts();
    let ex = FeatureExtractor::new(&stats, &provider, &lexicon);
    let c = commit("Fixes bug 104231 in resolver", &[]);
    let hit = ex.extract(&cve("crash reported as bug 104231"), &c);
    assert_eq!(hit.get("bug_match"), 1.0);
    assert_eq!(hit.get("bug_num"), 1.0);
    let miss = ex.extract(&cve("crash reported as bug 999"), &c);
    assert_eq!(miss.get("bug_match"), 0.0);
}

#[test]
fn schema_dims_and_one_hot_shape() {
    let schema = EncoderSchema::new(10, true, 8);
    let (stats, provider, lexicon) = extractor_parts();
    let ex = FeatureExtractor::new(&stats, &provider, &lexicon);
    let f0 = ex.extract(&cve("d"), &commit("m", &[("a.c", &["x"])]));
    let bins = BinningSpec::default();
    let (sparse, dense) = schema.encode(&f0, true, &bins);
    assert_eq!(sparse.len(), schema.sparse_dim());
    assert_eq!(dense.len(), schema.dense_dim());
    // 33 binned features (10 wide) + 2 flags (2 wide) + f1 (2 wide)
    assert_eq!(schema.sparse_dim(), 33 * 10 + 2 * 2 + 2);
    assert_eq!(schema.dense_dim(), 17 + 16);
    // exactly one hot slot per block: 35 features + f1
    assert_eq!(sparse.iter().filter(|&&v| v == 1.0).count(), 36);
    assert!(sparse.iter().all(|&v| v == 0.0 || v == 1.0));
}

#[test]
fn schema_crosses_extend_width() {
    let mut schema = EncoderSchema::new(10, false, 4);
    let base = schema.sparse_dim();
    schema.crosses = vec![("cve_match".into(), "same_file_num".into())];
    schema.validate().unwrap();
    assert_eq!(schema.sparse_dim(), base + 2 * 10);
    let bad = EncoderSchema {
        crosses: vec![("nope".into(), "cve_match".into())],
        ..schema
    };
    assert!(bad.validate().is_err());
}

#[test]
fn store_roundtrip() {
    let (stats, provider, lexicon) = extractor_parts();
    let ex = FeatureExtractor::new(&stats, &provider, &lexicon);
    let mut table = store::PairTable::default();
    for i in 0..5 {
        let c = commit(&format!("message {i}"), &[("f.c", &["line"])]);
        let f0 = ex.extract(&cve(&format!("desc {i}")), &c);
        table.push("CVE-2014-8275", &format!("c{i}"), i == 0, &f0);
    }
    let sidecar = store::Sidecar {
        version: 1,
        fold: 0,
        feature_order: sparse_feature_names()
            .into_iter()
            .chain(dense_feature_names())
            .map(String::from)
            .collect(),
        realized_scalar_count: FEATURES.len(),
        n_bins: 10,
        binning: BinningSpec::default(),
        embed_dim: 8,
        embed_provider: "hash-8".into(),
        stats_digest: "digest".into(),
        train_cves: vec![],
    };
    let dir = tempfile::tempdir().unwrap();
    store::save(dir.path(), &table, &sidecar).unwrap();
    let (loaded, side2) = store::load(dir.path()).unwrap();
    assert_eq!(loaded, table);
    assert_eq!(side2.realized_scalar_count, 35);
    assert_eq!(loaded.f0(0), table.f0(0));
    assert_eq!(loaded.rows_of_cve("CVE-2014-8275").len(), 5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ratios_and_bins_stay_in_range(
        desc in "[a-z ./_]{0,80}",
        msg in "[a-zA-Z0-9 ._#-]{0,80}",
        path in "[a-z]{1,8}\\.[a-z]{1,3}",
        added in prop::collection::vec("[a-z =;()]{0,30}", 0..5),
    ) {
        let (stats, provider, lexicon) = extractor_parts();
        let ex = FeatureExtractor::new(&stats, &provider, &lexicon);
        let added_refs: Vec<&str> = added.iter().map(String::as_str).collect();
        let c = commit(&msg, &[(path.as_str(), &added_refs)]);
        let desc = if desc.trim().is_empty() { "x".to_string() } else { desc };
        let f0 = ex.extract(&cve(&desc), &c);
        prop_assert!(f0.validate().is_ok());

        let values: Vec<f64> = (0..20).map(|i| f0.get(FEATURES[i % FEATURES.len()].name) + i as f64).collect();
        let spec = build_binning_spec([("probe", &values[..])].into_iter(), 10).unwrap();
        for v in values {
            prop_assert!(spec.bin("probe", v) < 10);
        }
    }
}
