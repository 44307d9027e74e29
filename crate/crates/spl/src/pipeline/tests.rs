use super::*;
use crate::feedback::F1Assignment;
use crate::model::{Activation, TrainConfig};
use crate::synthetic::{generate, SyntheticConfig};
use config::{EmbeddingConfig, LlmConfig, ModelConfig, WorkerConfig};

fn small_corpus() -> crate::corpus::Corpus {
    generate(&SyntheticConfig {
        n_one_one: 8,
        n_one_n: 4,
        n_repos: 3,
        commits_per_repo: 18,
        min_co_patch_gap_days: 10,
        max_co_patch_gap_days: 30,
        seed: 5,
    })
}

pub(crate) fn fast_config() -> PipelineConfig {
    PipelineConfig {
        seed: 11,
        n_folds: 2,
        k_f1: 20,
        k_f2: 4,
        window_days: 56,
        feature_set: vec!["f0".into(), "f1".into(), "f2".into()],
        max_negatives: 1500,
        n_bins: 10,
        max_k: 10,
        pooled: false,
        llm: LlmConfig {
            kind: "mock".into(),
            mock_fp: 0.0,
            mock_fn: 0.0,
            mock_seed: 3,
            budget_usd: None,
            request_reasoning: false,
        },
        embedding: EmbeddingConfig {
            kind: "hash".into(),
            dim: 16,
        },
        model: ModelConfig {
            d_embed: 16,
            mlp_width: 16,
            mlp_layers: 2,
            gat_heads: 4,
            gat_layers: 2,
            activation: Activation::Relu,
            leaky_slope: 0.2,
            unfreeze_node_init: false,
            cross_features: vec![],
        },
        train: TrainConfig {
            learning_rate: 0.01,
            l2: 1e-5,
            dropout: 0.0,
            epochs: 6,
            batch_size: 4096,
            focal_alpha: 1.0 / 20.0,
            focal_gamma: 2.0,
            seed: 21,
        },
        workers: WorkerConfig { features: 2, llm: 2 },
    }
}

#[test]
fn ranking_csv_roundtrip_and_tie_break() {
    let mut ranking = Ranking::new(Stage::Ranking0);
    ranking.insert(
        "CVE-2020-0001",
        vec![
            ("zz".into(), 0.5),
            ("aa".into(), 0.5),
            ("top".into(), 0.9),
        ],
    );
    let list = &ranking.per_cve["CVE-2020-0001"];
    assert_eq!(list[0].0, "top");
    // tie on 0.5 broken by ascending commit id
    assert_eq!(list[1].0, "aa");
    assert_eq!(list[2].0, "zz");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    ranking.save_csv(&path).unwrap();
    let loaded = Ranking::load_csv(&path, Stage::Ranking0).unwrap();
    assert_eq!(loaded.per_cve, ranking.per_cve);
}

#[test]
fn full_run_produces_rankings_and_report() {
    let corpus = small_corpus();
    let dir = tempfile::tempdir().unwrap();
    let mut pipeline = Pipeline::new(corpus, fast_config(), dir.path()).unwrap();
    let report = pipeline.run(false).unwrap().expect("not a dry run");

    // every CVE ranked, all candidate pairs covered
    let ranking2 =
        Ranking::load_csv(&dir.path().join("ranking2.csv"), Stage::Ranking2).unwrap();
    assert_eq!(ranking2.per_cve.len(), 12);
    for list in ranking2.per_cve.values() {
        assert!(list.len() >= 17, "each CVE ranks its repo's candidates");
    }
    assert!(dir.path().join("ranking0.csv").exists());
    assert!(dir.path().join("ranking1.csv").exists());
    assert!(dir.path().join("f1.json").exists());
    assert!(dir.path().join("report.json").exists());
    assert!(dir.path().join("report.md").exists());
    assert!(dir.path().join("manifest.json").exists());

    // with a zero-error oracle the final ranking solves the fixture
    let row = &report.tables["Full"]["F0+F1+F2"];
    assert!(row.recall[9] > 0.9, "R@10 = {}", row.recall[9]);

    // cost accounting: every query audited, cache cold
    let cost = report.cost.as_ref().unwrap();
    assert_eq!(cost.client_calls as usize, cost.n_f1_queries + cost.n_f2_queries);
    // query count bound: n_cves * k_f1 plus the candidate pairs
    assert!(cost.n_f1_queries <= 12 * 20);
}

#[test]
fn rerun_is_resumable_and_deterministic() {
    let corpus = small_corpus();
    let dir = tempfile::tempdir().unwrap();
    let config = fast_config();
    let mut first = Pipeline::new(corpus.clone(), config.clone(), dir.path()).unwrap();
    first.run(false).unwrap();
    let ranking_bytes = std::fs::read(dir.path().join("ranking2.csv")).unwrap();
    let report_bytes = std::fs::read(dir.path().join("report.json")).unwrap();
    let calls_after_first = first.client.client_calls();

    // rerun in the same directory: stages are skipped, zero new client calls
    let mut second = Pipeline::new(corpus.clone(), config.clone(), dir.path()).unwrap();
    second.run(false).unwrap();
    assert_eq!(second.client.client_calls(), 0, "resume must be free");
    assert_eq!(std::fs::read(dir.path().join("ranking2.csv")).unwrap(), ranking_bytes);

    // independent directory, same seeds: bitwise-identical outputs
    let dir2 = tempfile::tempdir().unwrap();
    let mut third = Pipeline::new(corpus, config, dir2.path()).unwrap();
    third.run(false).unwrap();
    assert_eq!(std::fs::read(dir2.path().join("ranking2.csv")).unwrap(), ranking_bytes);
    assert_eq!(std::fs::read(dir2.path().join("report.json")).unwrap(), report_bytes);
    assert_eq!(third.client.client_calls(), calls_after_first);
}

#[test]
fn stage3_rebuilds_identically_from_persisted_artifacts() {
    let corpus = small_corpus();
    let dir = tempfile::tempdir().unwrap();
    let mut pipeline = Pipeline::new(corpus.clone(), fast_config(), dir.path()).unwrap();
    pipeline.run(false).unwrap();
    let original = std::fs::read(dir.path().join("ranking2.csv")).unwrap();

    // delete stage-3 outputs; stages 1-2 stay on disk
    std::fs::remove_file(dir.path().join("ranking2.csv")).unwrap();
    let mut again = Pipeline::new(corpus, fast_config(), dir.path()).unwrap();
    again.run(false).unwrap();
    assert_eq!(std::fs::read(dir.path().join("ranking2.csv")).unwrap(), original);
    assert_eq!(again.client.client_calls(), 0, "stages 1-2 served from disk");
}

#[test]
fn no_test_fold_leakage_in_statistics() {
    // plant a sentinel token in exactly one CVE's description; folds that
    // hold that CVE out must not see the token in their idf table
    let mut corpus = small_corpus();
    let sentinel = "xyzzyplugh";
    let target = corpus.cves.keys().next().unwrap().clone();
    corpus.cves.get_mut(&target).unwrap().description += &format!(" {sentinel} marker");

    let dir = tempfile::tempdir().unwrap();
    let mut pipeline = Pipeline::new(corpus, fast_config(), dir.path()).unwrap();
    pipeline.ensure_features().unwrap();
    let target_fold = pipeline.folds.fold_of[&target];
    for fold in 0..pipeline.folds.n_folds {
        let stats_text =
            std::fs::read_to_string(dir.path().join(format!("features/fold{fold}/stats.json")))
                .unwrap();
        let stats: crate::features::CorpusStats = serde_json::from_str(&stats_text).unwrap();
        if fold == target_fold {
            assert!(
                !stats.df.contains_key(sentinel),
                "fold {fold} trains without the held-out CVE, so the sentinel must be absent"
            );
        } else {
            assert!(
                stats.df.contains_key(sentinel),
                "fold {fold} trains on the sentinel CVE"
            );
        }
    }
}

#[test]
fn k_f2_zero_degrades_gracefully() {
    let corpus = small_corpus();
    let dir = tempfile::tempdir().unwrap();
    let mut config = fast_config();
    config.k_f2 = 0;
    let mut pipeline = Pipeline::new(corpus, config, dir.path()).unwrap();
    let report = pipeline.run(false).unwrap().unwrap();
    // no graphs were built, so no relation queries were spent
    assert_eq!(report.cost.as_ref().unwrap().n_f2_queries, 0);
    assert!(report.tables["Full"].contains_key("F0+F1+F2"));
}

#[test]
fn all_zero_feedback_still_completes() {
    let corpus = small_corpus();
    let dir = tempfile::tempdir().unwrap();
    let mut config = fast_config();
    config.llm.mock_fn = 1.0; // every true pair flipped to NO
    config.llm.mock_fp = 0.0;
    let mut pipeline = Pipeline::new(corpus, config, dir.path()).unwrap();
    let report = pipeline.run(false).unwrap().unwrap();
    assert!(report.tables.contains_key("Full"));
    let f1 = F1Assignment::load(&dir.path().join("f1.json")).unwrap();
    for entries in f1.per_cve.values() {
        assert!(entries.iter().all(|e| !e.bit));
    }
}

#[test]
fn budget_gate_aborts_before_any_call() {
    let corpus = small_corpus();
    let dir = tempfile::tempdir().unwrap();
    let mut config = fast_config();
    config.llm.budget_usd = Some(0.0);
    let mut pipeline = Pipeline::new(corpus, config, dir.path()).unwrap();
    let err = pipeline.run(false).unwrap_err();
    assert!(matches!(err, Error::BudgetExceeded { .. }));
    assert_eq!(pipeline.client.client_calls(), 0);
}

#[test]
fn dry_run_makes_zero_calls() {
    let corpus = small_corpus();
    let dir = tempfile::tempdir().unwrap();
    let mut pipeline = Pipeline::new(corpus, fast_config(), dir.path()).unwrap();
    let report = pipeline.run(true).unwrap();
    assert!(report.is_none());
    assert_eq!(pipeline.client.client_calls(), 0);
    assert!(dir.path().join("ranking0.csv").exists());
}

#[test]
fn ablation_covers_three_feature_sets() {
    let corpus = small_corpus();
    let dir = tempfile::tempdir().unwrap();
    let mut pipeline = Pipeline::new(corpus, fast_config(), dir.path()).unwrap();
    let report = pipeline.run_ablation().unwrap();
    for partition in ["Full", "1-1", "1-N"] {
        let by_feature = &report.tables[partition];
        assert_eq!(by_feature.len(), 3, "{partition} holds all three rows");
        for label in ["F0", "F0+F1", "F0+F1+F2"] {
            assert_eq!(by_feature[label].recall.len(), 10);
        }
    }
    // 1-N recall at 1 is structurally zero: two patches cannot share rank 1
    assert_eq!(report.tables["1-N"]["F0+F1+F2"].recall[0], 0.0);
    assert!(dir.path().join("ranking2_f0.csv").exists());
    assert!(dir.path().join("ranking2_f0_f1.csv").exists());
    assert!(dir.path().join("ranking2.csv").exists());
}
