//! The pipeline runner: wires corpus, features, feedback, graph and model
//! together, persists every stage artifact under one run directory and
//! resumes from the manifest when inputs are unchanged.

use super::config::{FeatureSet, PipelineConfig};
use super::manifest::RunManifest;
use super::{Ranking, Stage};
use crate::corpus::{sample_negatives, split_folds, Corpus, FoldAssignment, LabeledPair};
use crate::error::{Error, Result};
use crate::eval::{self, CostTally, MetricsReport};
use crate::features::{
    build_binning_spec, build_corpus_stats, store, BinningSpec, EmbeddingProvider, EncoderSchema,
    FeatureExtractor, HashEmbedder, Lexicon, FEATURES,
};
use crate::feedback::{
    collect_f1, estimate_cost, CachedClient, CostEstimate, F1Assignment, HttpLlm, LlmClient,
    MockLlm, MockOracle, PromptOptions, VerdictCache,
};
use crate::graph::{build_graph, candidate_pairs, save_graph, CandidateFilter, CommitGraph};
use crate::model::{
    checkpoint, joint::score_batch, train, Batch, GraphTensors, JointParams, ModelDims,
    TrainConfig,
};
use crate::util;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

pub struct Pipeline {
    pub corpus: Corpus,
    pub config: PipelineConfig,
    pub out_dir: PathBuf,
    pub folds: FoldAssignment,
    pub pairs: Vec<LabeledPair>,
    pub client: CachedClient,
    provider: Box<dyn EmbeddingProvider>,
    lexicon: Lexicon,
    manifest: RunManifest,
    corpus_digest: String,
}

fn corpus_digest(corpus: &Corpus) -> Result<String> {
    let mut hasher = Vec::new();
    for cve in corpus.cves.values() {
        hasher.extend_from_slice(serde_json::to_string(cve)?.as_bytes());
    }
    for commits in corpus.commits.values() {
        for commit in commits.values() {
            hasher.extend_from_slice(serde_json::to_string(commit)?.as_bytes());
        }
    }
    for label in &corpus.labels {
        hasher.extend_from_slice(serde_json::to_string(label)?.as_bytes());
    }
    Ok(util::sha256_hex(&hasher))
}

impl Pipeline {
    pub fn new(corpus: Corpus, config: PipelineConfig, out_dir: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        corpus.validate()?;
        let out_dir = out_dir.into();
        std::fs::create_dir_all(&out_dir)
            .map_err(|e| Error::io(out_dir.display().to_string(), e))?;
        let folds = split_folds(&corpus, config.n_folds, config.seed)?;
        let pairs = sample_negatives(&corpus, config.max_negatives, config.seed);

        let inner: Arc<dyn LlmClient> = match config.llm.kind.as_str() {
            "http" => Arc::new(HttpLlm::from_env()?),
            _ => Arc::new(MockLlm::with_error_rates(
                MockOracle::from_corpus(&corpus),
                config.llm.mock_fp,
                config.llm.mock_fn,
                config.llm.mock_seed,
            )),
        };
        let cache_dir = std::env::var("SPL_CACHE_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|_| out_dir.join("feedback/cache"));
        let client = CachedClient::new(inner, VerdictCache::new(cache_dir));

        let provider: Box<dyn EmbeddingProvider> = match config.embedding.kind.as_str() {
            "http" => Box::new(crate::features::embed::HttpEmbedder::from_env(
                config.embedding.dim,
            )?),
            _ => Box::new(HashEmbedder::new(config.embedding.dim)),
        };

        let digest = corpus_digest(&corpus)?;
        let config_digest = config.digest()?;
        let run_id = format!("run-{}", &util::sha256_hex(
            format!("{config_digest}{digest}").as_bytes(),
        )[..12]);
        let manifest = RunManifest::load_or_create(&out_dir, &run_id, &config_digest, &digest)?;

        Ok(Self {
            corpus,
            config,
            out_dir,
            folds,
            pairs,
            client,
            provider,
            lexicon: Lexicon::builtin(),
            manifest,
            corpus_digest: digest,
        })
    }

    pub fn run_id(&self) -> &str {
        &self.manifest.run_id
    }

    fn stage_digest(&self, stage: &str) -> Result<String> {
        Ok(util::sha256_hex(
            format!("{}:{}:{stage}", self.config.digest()?, self.corpus_digest).as_bytes(),
        ))
    }

    fn prompt_options(&self) -> PromptOptions {
        PromptOptions {
            request_reasoning: self.config.llm.request_reasoning,
        }
    }

    fn schema(&self, include_f1: bool) -> EncoderSchema {
        EncoderSchema {
            n_bins: self.config.n_bins,
            include_f1,
            embed_dim: self.config.embedding.dim,
            crosses: self.config.model.cross_features.clone(),
        }
    }

    fn dims(&self, schema: &EncoderSchema) -> ModelDims {
        ModelDims {
            d_sparse: schema.sparse_dim(),
            d_dense: schema.dense_dim(),
            d_embed: self.config.model.d_embed,
            mlp_width: self.config.model.mlp_width,
            mlp_layers: self.config.model.mlp_layers,
            node_dim: self.config.embedding.dim,
            gat_heads: self.config.model.gat_heads,
            gat_layers: self.config.model.gat_layers,
        }
    }

    fn features_dir(&self, fold: usize) -> PathBuf {
        self.out_dir.join(format!("features/fold{fold}"))
    }

    // ---------------- features ----------------

    /// Extract and persist per-fold feature tables. Statistics and bin
    /// edges come from each fold's training CVEs only.
    pub fn ensure_features(&mut self) -> Result<()> {
        let digest = self.stage_digest("features")?;
        if self.manifest.stage_is_fresh(&self.out_dir, "features", &digest) {
            return Ok(());
        }
        let started = Instant::now();
        let mut outputs = Vec::new();
        for fold in 0..self.folds.n_folds {
            let train_cves = self.folds.cves_outside_fold(fold);
            let stats =
                build_corpus_stats(&self.corpus, train_cves.iter().map(String::as_str));
            let extractor = FeatureExtractor::new(&stats, self.provider.as_ref(), &self.lexicon);
            let f0s = util::parallel_map(
                &self.pairs,
                self.config.workers.features,
                |pair| {
                    let cve = &self.corpus.cves[&pair.cve_id];
                    let repo = self.corpus.repo_of(&pair.cve_id).expect("labeled cve");
                    let commit = self
                        .corpus
                        .commit(repo, &pair.commit_id)
                        .expect("pair commit exists");
                    Ok(extractor.extract(cve, commit))
                },
            )?;
            let mut table = store::PairTable::default();
            for (pair, f0) in self.pairs.iter().zip(&f0s) {
                table.push(&pair.cve_id, &pair.commit_id, pair.label, f0);
            }
            // bin edges from training-fold pairs only
            let train_set: BTreeSet<&String> = train_cves.iter().collect();
            let train_rows: Vec<usize> = (0..table.len())
                .filter(|&i| train_set.contains(&table.cve_ids[i]))
                .collect();
            if train_rows.is_empty() {
                return Err(Error::EmptyTrainingSet);
            }
            let names: Vec<&str> = FEATURES.iter().map(|f| f.name).collect();
            let columns: Vec<Vec<f64>> = (0..names.len())
                .map(|f| train_rows.iter().map(|&i| table.scalars[f][i]).collect())
                .collect();
            let binning = build_binning_spec(
                names.iter().copied().zip(columns.iter().map(Vec::as_slice)),
                self.config.n_bins,
            )?;
            let stats_json = serde_json::to_vec(&stats)?;
            let sidecar = store::Sidecar {
                version: 1,
                fold,
                feature_order: names.iter().map(|s| s.to_string()).collect(),
                realized_scalar_count: names.len(),
                n_bins: self.config.n_bins,
                binning,
                embed_dim: self.config.embedding.dim,
                embed_provider: format!("{}-{}", self.config.embedding.kind, self.config.embedding.dim),
                stats_digest: util::sha256_hex(&stats_json),
                train_cves,
            };
            let dir = self.features_dir(fold);
            store::save(&dir, &table, &sidecar)?;
            util::atomic_write(&dir.join("stats.json"), &stats_json)?;
            outputs.push(dir.join("pairs.bin"));
            outputs.push(dir.join("sidecar.json"));
        }
        let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
        self.manifest.record_stage(
            &self.out_dir.clone(),
            "features",
            &digest,
            &refs,
            0,
            started.elapsed().as_secs_f64(),
        )
    }

    // ---------------- per-fold model ----------------

    fn encode_fold(
        &self,
        table: &store::PairTable,
        binning: &BinningSpec,
        schema: &EncoderSchema,
        f1: Option<&F1Assignment>,
    ) -> (Array2<f64>, Array2<f64>) {
        let n = table.len();
        let mut x_sparse = Array2::zeros((n, schema.sparse_dim()));
        let mut x_dense = Array2::zeros((n, schema.dense_dim()));
        for i in 0..n {
            let f0 = table.f0(i);
            let bit = f1
                .map(|a| a.bit(&table.cve_ids[i], &table.commit_ids[i]))
                .unwrap_or(false);
            let (s, d) = schema.encode(&f0, bit, binning);
            for (j, v) in s.into_iter().enumerate() {
                x_sparse[(i, j)] = v;
            }
            for (j, v) in d.into_iter().enumerate() {
                x_dense[(i, j)] = v;
            }
        }
        (x_sparse, x_dense)
    }

    /// Train on the fold's training rows and score its test rows.
    /// Returns the per-CVE scored candidates for the fold's test CVEs.
    #[allow(clippy::too_many_arguments)]
    fn run_fold(
        &self,
        fold: usize,
        schema: &EncoderSchema,
        f1: Option<&F1Assignment>,
        graphs: &[GraphTensors],
        graph_of_repo: &BTreeMap<String, usize>,
        stage_tag: &str,
        unfreeze: bool,
    ) -> Result<BTreeMap<String, Vec<(String, f64)>>> {
        let (table, sidecar) = store::load(&self.features_dir(fold))?;
        let (x_sparse, x_dense) = self.encode_fold(&table, &sidecar.binning, schema, f1);
        let graph_nodes: Vec<Option<(usize, usize)>> = (0..table.len())
            .map(|i| {
                let repo = self.corpus.repo_of(&table.cve_ids[i])?;
                let &g = graph_of_repo.get(repo)?;
                let node = graphs[g].node_index.get(&table.commit_ids[i])?;
                Some((g, *node))
            })
            .collect();

        let train_rows: Vec<usize> = (0..table.len())
            .filter(|&i| self.folds.fold_of[&table.cve_ids[i]] != fold)
            .collect();
        let test_rows: Vec<usize> = (0..table.len())
            .filter(|&i| self.folds.fold_of[&table.cve_ids[i]] == fold)
            .collect();
        if train_rows.is_empty() || test_rows.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }

        let select = |rows: &[usize]| Batch {
            x_sparse: x_sparse.select(ndarray::Axis(0), rows),
            x_dense: x_dense.select(ndarray::Axis(0), rows),
            labels: rows.iter().map(|&i| table.labels[i]).collect(),
            graph_nodes: rows.iter().map(|&i| graph_nodes[i]).collect(),
        };
        let train_batch = select(&train_rows);
        let test_batch = select(&test_rows);

        let dims = self.dims(schema);
        let init_seed = util::stable_hash64(&[
            b"init",
            &self.config.train.seed.to_le_bytes(),
            stage_tag.as_bytes(),
            &fold.to_le_bytes(),
        ]);
        let mut rng = ChaCha12Rng::seed_from_u64(init_seed);
        let mut params = JointParams::init(
            dims,
            self.config.model.activation,
            self.config.model.leaky_slope,
            &mut rng,
        )?;
        let (offset, mul) = schema.dense_scale(&sidecar.binning);
        params.wide_deep.set_dense_scale(&offset, &mul);
        if unfreeze && !graphs.is_empty() {
            params.unfreeze_node_feats(graphs);
        }

        let train_config = TrainConfig {
            seed: util::stable_hash64(&[
                b"shuffle",
                &self.config.train.seed.to_le_bytes(),
                stage_tag.as_bytes(),
                &fold.to_le_bytes(),
            ]),
            ..self.config.train
        };
        let ckpt = self
            .out_dir
            .join(format!("models/{stage_tag}_fold{fold}.ckpt"));
        std::fs::create_dir_all(ckpt.parent().expect("models dir"))
            .map_err(|e| Error::io(ckpt.display().to_string(), e))?;
        let result = train(params, &train_batch, graphs, &train_config, Some(&ckpt))?;
        checkpoint::save(
            &ckpt,
            &result.params,
            &serde_json::json!({
                "stage": stage_tag,
                "fold": fold,
                "schema_digest": util::sha256_hex(serde_json::to_string(schema)?.as_bytes()),
                "stats_digest": sidecar.stats_digest,
                "seed": self.config.train.seed,
                "final_loss": result.loss_trace.last(),
            }),
        )?;

        let scores = score_batch(&result.params, &test_batch, graphs)?;
        let mut per_cve: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        for (row, score) in test_rows.iter().zip(scores) {
            per_cve
                .entry(table.cve_ids[*row].clone())
                .or_default()
                .push((table.commit_ids[*row].clone(), score));
        }
        Ok(per_cve)
    }

    fn rank_all_folds(
        &self,
        stage: Stage,
        schema: &EncoderSchema,
        f1: Option<&F1Assignment>,
        graphs: &[GraphTensors],
        graph_of_repo: &BTreeMap<String, usize>,
        stage_tag: &str,
        unfreeze: bool,
    ) -> Result<Ranking> {
        let mut ranking = Ranking::new(stage);
        for fold in 0..self.folds.n_folds {
            let per_cve =
                self.run_fold(fold, schema, f1, graphs, graph_of_repo, stage_tag, unfreeze)?;
            for (cve, scored) in per_cve {
                ranking.insert(&cve, scored);
            }
        }
        Ok(ranking)
    }

    // ---------------- stage 1 ----------------

    /// Cost estimate for the feedback plan over a ranking.
    pub fn plan_f1(&self, ranking0: &Ranking) -> CostEstimate {
        let top = ranking0.top_k(self.config.k_f1);
        let n: usize = top.values().map(Vec::len).sum();
        estimate_cost(n, 0)
    }

    /// Train the base ranker on the pair features, emit the initial
    /// ranking and collect feedback bits for each CVE's top-k commits.
    /// With `dry_run` the ranking is produced and the cost printed, but
    /// no client call is made and no feedback is returned.
    pub fn stage1(&mut self, dry_run: bool) -> Result<(Ranking, Option<F1Assignment>)> {
        let collect = self.config.feature_set()?.f1;
        self.stage1_impl(collect, dry_run)
    }

    fn stage1_impl(
        &mut self,
        collect: bool,
        dry_run: bool,
    ) -> Result<(Ranking, Option<F1Assignment>)> {
        self.ensure_features()?;
        let stage_name = if collect { "stage1" } else { "stage1-nofeedback" };
        let digest = self.stage_digest(stage_name)?;
        let ranking_path = self.out_dir.join(Stage::Ranking0.file_name());
        let f1_path = self.out_dir.join("f1.json");
        if self.manifest.stage_is_fresh(&self.out_dir, stage_name, &digest) {
            let ranking = Ranking::load_csv(&ranking_path, Stage::Ranking0)?;
            let f1 = if collect {
                Some(F1Assignment::load(&f1_path)?)
            } else {
                Some(F1Assignment {
                    k: self.config.k_f1,
                    per_cve: BTreeMap::new(),
                })
            };
            return Ok((ranking, f1));
        }
        let started = Instant::now();
        let schema = self.schema(false);
        let ranking = self.rank_all_folds(
            Stage::Ranking0,
            &schema,
            None,
            &[],
            &BTreeMap::new(),
            "stage1",
            false,
        )?;
        ranking.save_csv(&ranking_path)?;

        if !collect {
            self.manifest.record_stage(
                &self.out_dir.clone(),
                stage_name,
                &digest,
                &[&ranking_path],
                0,
                started.elapsed().as_secs_f64(),
            )?;
            return Ok((
                ranking,
                Some(F1Assignment {
                    k: self.config.k_f1,
                    per_cve: BTreeMap::new(),
                }),
            ));
        }

        let estimate = self.plan_f1(&ranking);
        if let Some(budget) = self.config.llm.budget_usd {
            if estimate.usd > budget {
                return Err(Error::BudgetExceeded {
                    estimate: estimate.usd,
                    budget,
                });
            }
        }
        if dry_run {
            log::info!(
                "dry run: {} feedback queries, {:.2} USD, {:.0} s serial",
                estimate.n_f1_queries,
                estimate.usd,
                estimate.est_wallclock_seconds
            );
            return Ok((ranking, None));
        }
        let f1 = collect_f1(
            &ranking.top_k(self.config.k_f1),
            &self.corpus,
            self.config.k_f1,
            &self.client,
            self.prompt_options(),
            self.config.workers.llm,
        )?;
        f1.save(&f1_path)?;
        self.manifest.record_stage(
            &self.out_dir.clone(),
            stage_name,
            &digest,
            &[&ranking_path, &f1_path],
            f1.n_queries() as u64,
            started.elapsed().as_secs_f64(),
        )?;
        Ok((ranking, Some(f1)))
    }

    // ---------------- stage 2 ----------------

    /// Candidate pairs per repo for the graph stage, from the top-k
    /// commits of `ranking1`, plus the query cost estimate.
    pub fn plan_f2(
        &self,
        ranking1: &Ranking,
    ) -> Result<(BTreeMap<String, BTreeSet<(String, String)>>, CostEstimate)> {
        let filter = CandidateFilter {
            window_days: self.config.window_days,
        };
        let mut seeds_by_repo: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (cve, top) in ranking1.top_k(self.config.k_f2) {
            let repo = self
                .corpus
                .repo_of(&cve)
                .ok_or_else(|| Error::NotFound(format!("repo of {cve}")))?;
            seeds_by_repo
                .entry(repo.to_string())
                .or_default()
                .extend(top);
        }
        let mut pairs_by_repo = BTreeMap::new();
        let mut total = 0usize;
        for (repo, seed_ids) in &seeds_by_repo {
            let commits = &self.corpus.commits[repo];
            let all: Vec<&crate::corpus::CommitRecord> = commits.values().collect();
            let seeds: Vec<&crate::corpus::CommitRecord> = seed_ids
                .iter()
                .filter_map(|id| commits.get(id))
                .collect();
            let pairs = candidate_pairs(&seeds, &all, &filter);
            total += pairs.len();
            pairs_by_repo.insert(repo.clone(), pairs);
        }
        Ok((pairs_by_repo, estimate_cost(0, total)))
    }

    /// Retrain with the feedback bit, emit the improved ranking and build
    /// the endorsed per-repo graphs from its top commits.
    pub fn stage2(&mut self, f1: &F1Assignment) -> Result<(Ranking, Vec<CommitGraph>)> {
        self.stage2_impl(f1, true)
    }

    /// Stage-2 retraining without the graph queries, for feature sets
    /// that stop at the feedback bit.
    pub fn stage2_ranking_only(&mut self, f1: &F1Assignment) -> Result<Ranking> {
        Ok(self.stage2_impl(f1, false)?.0)
    }

    fn stage2_impl(
        &mut self,
        f1: &F1Assignment,
        build_graphs: bool,
    ) -> Result<(Ranking, Vec<CommitGraph>)> {
        let stage_name = if build_graphs { "stage2" } else { "stage2-nograph" };
        let digest = self.stage_digest(stage_name)?;
        let ranking_path = self.out_dir.join(Stage::Ranking1.file_name());
        let graph_dir = self.out_dir.join("graph");
        if self.manifest.stage_is_fresh(&self.out_dir, stage_name, &digest) {
            let ranking = Ranking::load_csv(&ranking_path, Stage::Ranking1)?;
            let mut graphs = Vec::new();
            if build_graphs {
                for repo in self.corpus.commits.keys() {
                    let safe = repo.replace('/', "_");
                    if graph_dir.join(format!("{safe}.edges.jsonl")).exists() {
                        let mut graph = crate::graph::load_graph(&graph_dir, &safe)?;
                        graph.repo_id = repo.clone();
                        graphs.push(graph);
                    }
                }
            }
            return Ok((ranking, graphs));
        }
        let started = Instant::now();
        let schema = self.schema(true);
        let ranking = self.rank_all_folds(
            Stage::Ranking1,
            &schema,
            Some(f1),
            &[],
            &BTreeMap::new(),
            "stage2",
            false,
        )?;
        ranking.save_csv(&ranking_path)?;

        if !build_graphs {
            self.manifest.record_stage(
                &self.out_dir.clone(),
                stage_name,
                &digest,
                &[&ranking_path],
                0,
                started.elapsed().as_secs_f64(),
            )?;
            return Ok((ranking, Vec::new()));
        }

        let (pairs_by_repo, estimate) = self.plan_f2(&ranking)?;
        if let Some(budget) = self.config.llm.budget_usd {
            let spent = estimate_cost(f1.n_queries(), 0).usd;
            if spent + estimate.usd > budget {
                return Err(Error::BudgetExceeded {
                    estimate: spent + estimate.usd,
                    budget,
                });
            }
        }

        let mut graphs = Vec::new();
        let mut outputs = vec![ranking_path.clone()];
        let mut n_queries = 0u64;
        for (repo, pairs) in &pairs_by_repo {
            let commits = &self.corpus.commits[repo];
            let by_id: BTreeMap<String, &crate::corpus::CommitRecord> =
                commits.iter().map(|(id, c)| (id.clone(), c)).collect();
            let seed_ids: BTreeSet<String> = ranking
                .top_k(self.config.k_f2)
                .into_iter()
                .filter(|(cve, _)| self.corpus.repo_of(cve) == Some(repo.as_str()))
                .flat_map(|(_, ids)| ids)
                .collect();
            let seeds: Vec<&crate::corpus::CommitRecord> =
                seed_ids.iter().filter_map(|id| commits.get(id)).collect();
            let mut graph = build_graph(
                repo,
                pairs,
                &seeds,
                &by_id,
                &self.client,
                self.provider.as_ref(),
                self.prompt_options(),
                self.config.workers.llm,
            )?;
            n_queries += pairs.len() as u64;
            // file names flatten the repo path
            graph.repo_id = repo.replace('/', "_");
            save_graph(&graph_dir, &graph)?;
            outputs.push(graph_dir.join(format!("{}.edges.jsonl", graph.repo_id)));
            outputs.push(graph_dir.join(format!("{}.nodes.jsonl", graph.repo_id)));
            graph.repo_id = repo.clone();
            graphs.push(graph);
        }
        let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
        self.manifest.record_stage(
            &self.out_dir.clone(),
            stage_name,
            &digest,
            &refs,
            n_queries,
            started.elapsed().as_secs_f64(),
        )?;
        Ok((ranking, graphs))
    }

    // ---------------- stage 3 ----------------

    /// Train the joint model with the requested feature families and emit
    /// the final ranking.
    pub fn stage3(
        &mut self,
        f1: &F1Assignment,
        graphs: &[CommitGraph],
        feature_set: FeatureSet,
    ) -> Result<Ranking> {
        let label = feature_set.label().replace('+', "_").to_lowercase();
        let stage_tag = format!("stage3_{label}");
        let digest = self.stage_digest(&stage_tag)?;
        let ranking_path = if feature_set == self.config.feature_set()? {
            self.out_dir.join(Stage::Ranking2.file_name())
        } else {
            self.out_dir.join(format!("ranking2_{label}.csv"))
        };
        if self.manifest.stage_is_fresh(&self.out_dir, &stage_tag, &digest) {
            return Ranking::load_csv(&ranking_path, Stage::Ranking2);
        }
        let started = Instant::now();
        let schema = self.schema(feature_set.f1);
        let (tensors, graph_of_repo) = if feature_set.f2 {
            let mut tensors = Vec::new();
            let mut map = BTreeMap::new();
            for graph in graphs {
                map.insert(graph.repo_id.clone(), tensors.len());
                tensors.push(GraphTensors::from_graph(graph, self.config.embedding.dim)?);
            }
            (tensors, map)
        } else {
            (Vec::new(), BTreeMap::new())
        };
        let ranking = self.rank_all_folds(
            Stage::Ranking2,
            &schema,
            feature_set.f1.then_some(f1),
            &tensors,
            &graph_of_repo,
            &stage_tag,
            self.config.model.unfreeze_node_init,
        )?;
        ranking.save_csv(&ranking_path)?;
        self.manifest.record_stage(
            &self.out_dir.clone(),
            &stage_tag,
            &digest,
            &[&ranking_path],
            0,
            started.elapsed().as_secs_f64(),
        )?;
        Ok(ranking)
    }

    // ---------------- evaluation and entry points ----------------

    fn cost_tally(&self, f1_queries: usize, f2_queries: usize) -> CostTally {
        let estimate = estimate_cost(f1_queries, f2_queries);
        CostTally {
            n_f1_queries: f1_queries,
            n_f2_queries: f2_queries,
            usd: estimate.usd,
            client_calls: self.client.client_calls(),
            cache_hits: self.client.cache_hits(),
        }
    }

    /// Metric tables for the given labeled rankings over the three
    /// partitions.
    pub fn evaluate(&self, rankings: &[(String, &Ranking)], cost: Option<CostTally>) -> Result<MetricsReport> {
        let labels = self.corpus.labels_by_cve();
        let (one_one, one_n) = crate::corpus::partition_by_cardinality(&self.corpus);
        let all: BTreeSet<String> = self.corpus.cves.keys().cloned().collect();
        let mut report = MetricsReport {
            max_k: self.config.max_k,
            averaging: if self.config.pooled {
                "pooled CVEs".into()
            } else {
                "macro over folds".into()
            },
            tables: BTreeMap::new(),
            confusion: None,
            cost,
        };
        for (partition, cves) in [("Full", &all), ("1-1", &one_one), ("1-N", &one_n)] {
            if cves.is_empty() {
                continue;
            }
            for (label, ranking) in rankings {
                let row = eval::metric_row_with_folds(
                    &ranking.ranked_ids(),
                    &labels,
                    Some(&self.folds),
                    cves,
                    self.config.max_k,
                    self.config.pooled,
                )?;
                report
                    .tables
                    .entry(partition.to_string())
                    .or_default()
                    .insert(label.clone(), row);
            }
        }
        Ok(report)
    }

    fn write_report(&self, report: &MetricsReport) -> Result<()> {
        util::atomic_write(
            &self.out_dir.join("report.json"),
            report.to_json()?.as_bytes(),
        )?;
        util::atomic_write(
            &self.out_dir.join("report.md"),
            report.to_markdown(None).as_bytes(),
        )
    }

    /// The full three-stage run with the configured feature set.
    pub fn run(&mut self, dry_run: bool) -> Result<Option<MetricsReport>> {
        let feature_set = self.config.feature_set()?;
        let (_ranking0, f1) = self.stage1(dry_run)?;
        let Some(f1) = f1 else {
            return Ok(None); // dry run stops before any client call
        };
        let graphs = if feature_set.f2 {
            self.stage2(&f1)?.1
        } else if feature_set.f1 {
            self.stage2_ranking_only(&f1)?;
            Vec::new()
        } else {
            Vec::new()
        };
        let ranking2 = self.stage3(&f1, &graphs, feature_set)?;
        let f2_queries: usize = graphs.iter().map(|g| g.edges.len()).sum();
        let cost = self.cost_tally(f1.n_queries(), f2_queries);
        let report = self.evaluate(
            &[(feature_set.label().to_string(), &ranking2)],
            Some(cost.clone()),
        )?;
        self.write_report(&report)?;
        self.manifest.finalize(&self.out_dir.clone(), cost)?;
        Ok(Some(report))
    }

    /// Stage 1 and 2 once, then stage 3 for each of the three feature
    /// sets under identical folds and seeds.
    pub fn run_ablation(&mut self) -> Result<MetricsReport> {
        let (_, f1) = self.stage1_impl(true, false)?;
        let f1 = f1.expect("stage1 without dry_run returns feedback");
        let (_, graphs) = self.stage2(&f1)?;
        let mut rankings = Vec::new();
        for set in [FeatureSet::F0, FeatureSet::F0_F1, FeatureSet::F0_F1_F2] {
            let ranking = self.stage3(&f1, &graphs, set)?;
            rankings.push((set.label().to_string(), ranking));
        }
        let f2_queries: usize = graphs.iter().map(|g| g.edges.len()).sum();
        let cost = self.cost_tally(f1.n_queries(), f2_queries);
        let refs: Vec<(String, &Ranking)> = rankings
            .iter()
            .map(|(label, r)| (label.clone(), r))
            .collect();
        let report = self.evaluate(&refs, Some(cost.clone()))?;
        self.write_report(&report)?;
        self.manifest.finalize(&self.out_dir.clone(), cost)?;
        Ok(report)
    }
}
