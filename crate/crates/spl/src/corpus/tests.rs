use super::*;
use chrono::TimeZone;

pub(crate) fn ts(secs: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(secs, 0).unwrap()
}

pub(crate) fn cve(id: &str, description: &str) -> CveRecord {
    CveRecord {
        cve_id: id.to_string(),
        description: description.to_string(),
        published_time: ts(1_600_000_000),
        cwe_id: Some("CWE-125".into()),
        cwe_name: Some("Out-of-bounds Read".into()),
        reference_urls: vec![],
    }
}

pub(crate) fn commit(repo: &str, id: &str, author: &str, secs: i64) -> CommitRecord {
    CommitRecord {
        commit_id: id.to_string(),
        repo_id: repo.to_string(),
        author: author.to_string(),
        author_time: ts(secs),
        committer: author.to_string(),
        commit_time: ts(secs),
        message: format!("commit {id}"),
        parent_ids: vec![],
        diffs: vec![FileDiff {
            file_path: "src/main.c".into(),
            added_lines: vec!["x = 1;".into()],
            deleted_lines: vec!["x = 0;".into()],
            hunk_headers: vec!["@@ -1,1 +1,1 @@ main".into()],
        }],
    }
}

fn small_corpus() -> Corpus {
    let mut c = Corpus::default();
    c.add_cve(cve("CVE-2020-0001", "overflow in parser")).unwrap();
    for i in 0..3 {
        c.add_commit(commit("r1", &format!("c{i}"), "alice", 1_600_000_000 + i))
            .unwrap();
    }
    c.add_label(PatchLabel {
        cve_id: "CVE-2020-0001".into(),
        commit_id: "c0".into(),
    })
    .unwrap();
    c
}

#[test]
fn load_counts_match() {
    let dir = tempfile::tempdir().unwrap();
    save_corpus(&small_corpus(), dir.path()).unwrap();
    let loaded = load_corpus(dir.path()).unwrap();
    assert_eq!(loaded.cves.len(), 1);
    assert_eq!(loaded.n_commits(), 3);
    assert_eq!(loaded.labels.len(), 1);
}

#[test]
fn roundtrip_is_identity() {
    let original = small_corpus();
    let dir = tempfile::tempdir().unwrap();
    save_corpus(&original, dir.path()).unwrap();
    let loaded = load_corpus(dir.path()).unwrap();
    assert_eq!(loaded.cves, original.cves);
    assert_eq!(loaded.commits, original.commits);
    assert_eq!(loaded.labels, original.labels);
    assert_eq!(loaded.cve_repo, original.cve_repo);
}

#[test]
fn dangling_label_is_rejected() {
    let mut c = small_corpus();
    let err = c
        .add_label(PatchLabel {
            cve_id: "CVE-2020-0001".into(),
            commit_id: "missing".into(),
        })
        .unwrap_err();
    assert!(matches!(err, Error::DanglingLabel { .. }));
}

#[test]
fn duplicates_are_rejected() {
    let mut c = small_corpus();
    assert!(matches!(
        c.add_cve(cve("CVE-2020-0001", "again")).unwrap_err(),
        Error::DuplicateId(_)
    ));
    assert!(matches!(
        c.add_commit(commit("r1", "c0", "alice", 0)).unwrap_err(),
        Error::DuplicateId(_)
    ));
    assert!(matches!(
        c.add_label(PatchLabel {
            cve_id: "CVE-2020-0001".into(),
            commit_id: "c0".into(),
        })
        .unwrap_err(),
        Error::DuplicateId(_)
    ));
}

#[test]
fn bad_cve_id_is_rejected() {
    let mut c = Corpus::default();
    assert!(matches!(
        c.add_cve(cve("CVE-20-1", "x")).unwrap_err(),
        Error::CorpusInvariant(_)
    ));
}

#[test]
fn partition_splits_by_label_count() {
    let mut c = small_corpus();
    c.add_cve(cve("CVE-2020-0002", "double free")).unwrap();
    c.add_label(PatchLabel {
        cve_id: "CVE-2020-0002".into(),
        commit_id: "c1".into(),
    })
    .unwrap();
    c.add_label(PatchLabel {
        cve_id: "CVE-2020-0002".into(),
        commit_id: "c2".into(),
    })
    .unwrap();
    let (one_one, one_n) = partition_by_cardinality(&c);
    assert_eq!(one_one.len(), 1);
    assert_eq!(one_n.len(), 1);
    assert!(one_n.contains("CVE-2020-0002"));
    // disjoint union covers all CVEs
    assert!(one_one.is_disjoint(&one_n));
    assert_eq!(one_one.len() + one_n.len(), c.cves.len());
}

#[test]
fn sampling_respects_cap() {
    let mut c = Corpus::default();
    c.add_cve(cve("CVE-2020-0100", "big repo")).unwrap();
    for i in 0..2000 {
        c.add_commit(commit("big", &format!("c{i:04}"), "bob", i)).unwrap();
    }
    c.add_label(PatchLabel {
        cve_id: "CVE-2020-0100".into(),
        commit_id: "c0000".into(),
    })
    .unwrap();
    c.add_label(PatchLabel {
        cve_id: "CVE-2020-0100".into(),
        commit_id: "c0001".into(),
    })
    .unwrap();
    let pairs = sample_negatives(&c, 1500, 7);
    let positives = pairs.iter().filter(|p| p.label).count();
    let negatives = pairs.iter().filter(|p| !p.label).count();
    assert_eq!(positives, 2);
    assert_eq!(negatives, 1500);
}

#[test]
fn sampling_exhausts_small_repos() {
    let mut c = Corpus::default();
    c.add_cve(cve("CVE-2020-0200", "small repo")).unwrap();
    for i in 0..40 {
        c.add_commit(commit("small", &format!("c{i:02}"), "bob", i)).unwrap();
    }
    c.add_label(PatchLabel {
        cve_id: "CVE-2020-0200".into(),
        commit_id: "c00".into(),
    })
    .unwrap();
    let pairs = sample_negatives(&c, 1500, 7);
    assert_eq!(pairs.iter().filter(|p| p.label).count(), 1);
    assert_eq!(pairs.iter().filter(|p| !p.label).count(), 39);
}

#[test]
fn sampling_never_mislabels_a_patch() {
    let mut c = Corpus::default();
    for n in 0..5 {
        c.add_cve(cve(&format!("CVE-2021-{:04}", n + 1), "desc here")).unwrap();
    }
    for i in 0..60 {
        c.add_commit(commit("r", &format!("c{i:02}"), "bob", i)).unwrap();
    }
    for n in 0..5usize {
        for k in 0..=(n % 3) {
            c.add_label(PatchLabel {
                cve_id: format!("CVE-2021-{:04}", n + 1),
                commit_id: format!("c{:02}", n * 3 + k),
            })
            .unwrap();
        }
    }
    let labels = c.labels_by_cve();
    for seed in 0..20 {
        let pairs = sample_negatives(&c, 10, seed);
        for pair in pairs.iter().filter(|p| !p.label) {
            assert!(!labels[&pair.cve_id].contains(&pair.commit_id));
        }
        // deterministic under the same seed
        assert_eq!(pairs, sample_negatives(&c, 10, seed));
    }
}

fn corpus_with_n_cves(n: usize) -> Corpus {
    let mut c = Corpus::default();
    for i in 0..n {
        c.add_cve(cve(&format!("CVE-2022-{:04}", i + 1000), "text")).unwrap();
        c.add_commit(commit("r", &format!("c{i:03}"), "eve", i as i64)).unwrap();
        c.add_label(PatchLabel {
            cve_id: format!("CVE-2022-{:04}", i + 1000),
            commit_id: format!("c{i:03}"),
        })
        .unwrap();
    }
    c
}

#[test]
fn folds_are_balanced_round_robin() {
    let c = corpus_with_n_cves(10);
    let folds = split_folds(&c, 5, 3).unwrap();
    for f in 0..5 {
        assert_eq!(folds.cves_in_fold(f).len(), 2);
    }
}

#[test]
fn folds_same_seed_identical() {
    let c = corpus_with_n_cves(13);
    let a = split_folds(&c, 5, 11).unwrap();
    let b = split_folds(&c, 5, 11).unwrap();
    assert_eq!(a.fold_of, b.fold_of);
    let other = split_folds(&c, 5, 12).unwrap();
    assert_ne!(a.fold_of, other.fold_of);
}

#[test]
fn seven_cves_five_folds_sizes() {
    let c = corpus_with_n_cves(7);
    let folds = split_folds(&c, 5, 0).unwrap();
    let mut sizes: Vec<usize> = (0..5).map(|f| folds.cves_in_fold(f).len()).collect();
    sizes.sort_unstable();
    assert_eq!(sizes, vec![1, 1, 1, 2, 2]);
}

#[test]
fn folds_cover_all_cves_disjointly() {
    let c = corpus_with_n_cves(23);
    let folds = split_folds(&c, 5, 5).unwrap();
    let mut seen = BTreeSet::new();
    for f in 0..5 {
        for id in folds.cves_in_fold(f) {
            assert!(seen.insert(id), "cve assigned to two folds");
        }
    }
    assert_eq!(seen.len(), c.cves.len());
}

#[test]
fn too_few_cves_is_an_error() {
    let c = corpus_with_n_cves(3);
    assert!(matches!(
        split_folds(&c, 5, 0).unwrap_err(),
        Error::TooFewCves { .. }
    ));
}
