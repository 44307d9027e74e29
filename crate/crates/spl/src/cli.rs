//! The `spl` command line: one subcommand per pipeline capability plus a
//! `run` entry point driving all three stages from `pipeline.toml`.
//!
//! Exit codes: 0 on success, 1 on a domain error, 2 on a usage error.

use crate::corpus::{ingest, load_corpus, save_corpus, Corpus, PatchLabel};
use crate::error::{Error, Result};
use crate::eval::{self, Labels, MetricsReport, RankedLists, ReferenceTables};
use crate::feedback::estimate_cost;
use crate::features::store;
use crate::model::{checkpoint, joint::score_batch, train as train_model, GraphTensors};
use crate::pipeline::{Pipeline, PipelineConfig, Ranking, Stage};
use crate::util;
use clap::{Args, Parser, Subcommand};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "spl",
    version,
    about = "Rank repository commits by how likely each one patches a given CVE"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every pipeline-driving subcommand. CLI values override
/// the config file, which overrides the defaults.
#[derive(Args, Debug, Clone)]
struct PipelineArgs {
    /// corpus directory (cves.jsonl, commits.jsonl, labels.jsonl)
    #[arg(long)]
    corpus: PathBuf,
    /// pipeline.toml; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// run/output directory
    #[arg(long)]
    out: PathBuf,
    /// llm client: mock | http
    #[arg(long)]
    llm: Option<String>,
    /// mock false-positive rate
    #[arg(long)]
    mock_fp: Option<f64>,
    /// mock false-negative rate
    #[arg(long)]
    mock_fn: Option<f64>,
    #[arg(long)]
    mock_seed: Option<u64>,
    /// feedback depth (top-k of the initial ranking)
    #[arg(long)]
    k_f1: Option<usize>,
    /// graph seed depth (top-k of the improved ranking)
    #[arg(long)]
    k_f2: Option<usize>,
    /// candidate-pair time window in days
    #[arg(long)]
    window_days: Option<i64>,
    /// abort before any llm call if the plan exceeds this spend
    #[arg(long)]
    budget_usd: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// print the query plan and cost, make zero llm calls
    #[arg(long)]
    dry_run: bool,
}

impl PipelineArgs {
    fn build(&self) -> Result<(Corpus, PipelineConfig)> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(kind) = &self.llm {
            config.llm.kind = kind.clone();
        }
        if let Some(v) = self.mock_fp {
            config.llm.mock_fp = v;
        }
        if let Some(v) = self.mock_fn {
            config.llm.mock_fn = v;
        }
        if let Some(v) = self.mock_seed {
            config.llm.mock_seed = v;
        }
        if let Some(v) = self.k_f1 {
            config.k_f1 = v;
        }
        if let Some(v) = self.k_f2 {
            config.k_f2 = v;
        }
        if let Some(v) = self.window_days {
            config.window_days = v;
        }
        if let Some(v) = self.budget_usd {
            config.llm.budget_usd = Some(v);
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        config.validate()?;
        log::info!(
            "config: folds={} k_f1={} k_f2={} window={}d llm={} features={:?}",
            config.n_folds,
            config.k_f1,
            config.k_f2,
            config.window_days,
            config.llm.kind,
            config.feature_set
        );
        let corpus = load_corpus(&self.corpus)?;
        Ok((corpus, config))
    }

    fn pipeline(&self) -> Result<Pipeline> {
        let (corpus, config) = self.build()?;
        Pipeline::new(corpus, config, &self.out)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fetch CVEs and repository commits into a corpus directory
    Ingest {
        /// CVE ids to fetch
        #[arg(long = "cve")]
        cves: Vec<String>,
        /// repository id, e.g. owner/name
        #[arg(long)]
        repo: String,
        #[arg(long)]
        out: PathBuf,
        /// only commits after this RFC 3339 instant
        #[arg(long)]
        since: Option<String>,
        /// override the NVD endpoint (testing)
        #[arg(long)]
        nvd_url: Option<String>,
        /// override the git host endpoint (testing)
        #[arg(long)]
        git_url: Option<String>,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Extract and persist per-fold feature tables
    Features(PipelineArgs),
    /// Stage 1: base ranking plus feedback collection
    Feedback(PipelineArgs),
    /// Stage 2: retrain with feedback and build the endorsed commit graph
    Graph(PipelineArgs),
    /// Train a model from one persisted feature table
    Train {
        /// fold directory holding pairs.bin + sidecar.json
        #[arg(long)]
        features: PathBuf,
        /// edges.jsonl of a persisted graph (optional)
        #[arg(long)]
        graph: Option<PathBuf>,
        /// feedback assignment json (optional)
        #[arg(long)]
        f1: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// checkpoint output path
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a persisted feature table with a checkpoint
    Rank {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        f1: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// ranking csv output
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics for a ranking csv against labels
    Evaluate {
        #[arg(long)]
        rankings: PathBuf,
        /// labels.jsonl ({"cve_id","commit_id"} per line)
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Run stage 3 for all three feature sets and compare
    Ablation(PipelineArgs),
    /// Render report.md from a metrics json
    Report {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// reference table json for display-only comparison columns;
        /// "builtin" uses the bundled tables
        #[arg(long)]
        paper_ref: Option<String>,
    },
    /// The full three-stage pipeline
    Run(PipelineArgs),
    /// Stage 1 only (alias of feedback)
    Stage1(PipelineArgs),
    /// Stage 2 only (alias of graph)
    Stage2(PipelineArgs),
    /// Stage 3 only
    Stage3(PipelineArgs),
}

pub fn run() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Ingest {
            cves,
            repo,
            out,
            since,
            nvd_url,
            git_url,
            cache_dir,
        } => cmd_ingest(cves, repo, out, since, nvd_url, git_url, cache_dir),
        Command::Features(args) => {
            let mut pipeline = args.pipeline()?;
            pipeline.ensure_features()?;
            println!("features written under {}", args.out.join("features").display());
            Ok(())
        }
        Command::Feedback(args) | Command::Stage1(args) => {
            let mut pipeline = args.pipeline()?;
            let (ranking, f1) = pipeline.stage1(args.dry_run)?;
            let estimate = pipeline.plan_f1(&ranking);
            println!(
                "feedback plan: {} queries, {:.2} USD, {:.0} s serial",
                estimate.n_f1_queries, estimate.usd, estimate.est_wallclock_seconds
            );
            match f1 {
                Some(f1) => println!("collected {} feedback bits", f1.n_queries()),
                None => println!("dry run: no queries issued"),
            }
            Ok(())
        }
        Command::Graph(args) | Command::Stage2(args) => {
            let mut pipeline = args.pipeline()?;
            let (_, f1) = pipeline.stage1(false)?;
            let f1 = f1.ok_or_else(|| Error::Config("stage 1 produced no feedback".into()))?;
            if args.dry_run {
                let ranking1 = pipeline.stage2_ranking_only(&f1)?;
                let (pairs, estimate) = pipeline.plan_f2(&ranking1)?;
                let total: usize = pairs.values().map(|p| p.len()).sum();
                println!(
                    "graph plan: {total} candidate pairs, {:.2} USD, {:.0} s serial",
                    estimate.usd, estimate.est_wallclock_seconds
                );
                return Ok(());
            }
            let (_, graphs) = pipeline.stage2(&f1)?;
            let edges: usize = graphs.iter().map(|g| g.n_endorsed_edges()).sum();
            let queried: usize = graphs.iter().map(|g| g.edges.len()).sum();
            println!("graph built: {queried} pairs queried, {edges} endorsed edges");
            Ok(())
        }
        Command::Train {
            features,
            graph,
            f1,
            config,
            out,
        } => cmd_train(features, graph, f1, config, out),
        Command::Rank {
            features,
            checkpoint,
            graph,
            f1,
            config,
            out,
        } => cmd_rank(features, checkpoint, graph, f1, config, out),
        Command::Evaluate { rankings, labels, k } => cmd_evaluate(rankings, labels, k),
        Command::Ablation(args) => {
            let mut pipeline = args.pipeline()?;
            let report = pipeline.run_ablation()?;
            print!("{}", report.to_markdown(None));
            println!("report written to {}", args.out.join("report.md").display());
            Ok(())
        }
        Command::Report {
            metrics,
            out,
            paper_ref,
        } => cmd_report(metrics, out, paper_ref),
        Command::Run(args) => {
            let mut pipeline = args.pipeline()?;
            match pipeline.run(args.dry_run)? {
                Some(report) => {
                    print!("{}", report.to_markdown(None));
                    println!("report written to {}", args.out.join("report.md").display());
                }
                None => println!("dry run complete: no llm calls were made"),
            }
            Ok(())
        }
        Command::Stage3(args) => {
            let mut pipeline = args.pipeline()?;
            let feature_set = pipeline.config.feature_set()?;
            let (_, f1) = pipeline.stage1(false)?;
            let f1 = f1.ok_or_else(|| Error::Config("stage 1 produced no feedback".into()))?;
            let graphs = if feature_set.f2 {
                pipeline.stage2(&f1)?.1
            } else {
                Vec::new()
            };
            let ranking = pipeline.stage3(&f1, &graphs, feature_set)?;
            println!(
                "final ranking for {} CVEs written to {}",
                ranking.per_cve.len(),
                args.out.join(Stage::Ranking2.file_name()).display()
            );
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_ingest(
    cves: Vec<String>,
    repo: String,
    out: PathBuf,
    since: Option<String>,
    nvd_url: Option<String>,
    git_url: Option<String>,
    cache_dir: Option<PathBuf>,
) -> Result<()> {
    let cache = cache_dir.unwrap_or_else(|| out.join("cache"));
    let mut nvd = ingest::NvdClient::new(&cache);
    if let Some(url) = nvd_url {
        nvd.base_url = url;
    }
    let mut host = ingest::GitHostClient::new(&cache);
    if let Some(url) = git_url {
        host.base_url = url;
    }

    let mut corpus = Corpus::default();
    let commits = host.fetch_repo_commits(&repo, since.as_deref())?;
    println!("fetched {} commits from {repo}", commits.len());
    for commit in commits {
        corpus.add_commit(commit)?;
    }
    for cve_id in &cves {
        let record = nvd.fetch_cve(cve_id)?;
        corpus.add_cve(record)?;
    }
    // label commits explicitly referenced by the CVE's report
    let repo_commits: Vec<String> = corpus.commits[&repo].keys().cloned().collect();
    let mut labeled = 0;
    for cve_id in &cves {
        let urls = corpus.cves[cve_id].reference_urls.clone();
        for commit_id in &repo_commits {
            let prefix = &commit_id[..commit_id.len().min(7)];
            if urls.iter().any(|u| u.contains(commit_id) || u.contains(prefix)) {
                corpus.add_label(PatchLabel {
                    cve_id: cve_id.clone(),
                    commit_id: commit_id.clone(),
                })?;
                labeled += 1;
            }
        }
    }
    save_corpus(&corpus, &out)?;
    println!(
        "wrote {} CVEs, {} commits, {labeled} labels to {}",
        corpus.cves.len(),
        corpus.n_commits(),
        out.display()
    );
    Ok(())
}

fn load_graph_tensors(path: &Path, node_dim: usize) -> Result<Vec<GraphTensors>> {
    let stem = path
        .file_name()
        .and_then(|n| n.to_str())
        .and_then(|n| n.strip_suffix(".edges.jsonl"))
        .ok_or_else(|| Error::Config("expected a <repo>.edges.jsonl path".into()))?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let graph = crate::graph::load_graph(dir, stem)?;
    Ok(vec![GraphTensors::from_graph(&graph, node_dim)?])
}

fn assemble_batch(
    features: &Path,
    f1: Option<&Path>,
    config: &PipelineConfig,
    graphs: &[GraphTensors],
) -> Result<(store::PairTable, crate::model::Batch)> {
    let (table, sidecar) = store::load(features)?;
    let schema = crate::features::EncoderSchema {
        n_bins: sidecar.n_bins,
        include_f1: f1.is_some(),
        embed_dim: sidecar.embed_dim,
        crosses: config.model.cross_features.clone(),
    };
    let assignment = match f1 {
        Some(path) => Some(crate::feedback::F1Assignment::load(path)?),
        None => None,
    };
    let n = table.len();
    let mut sparse_rows = Vec::with_capacity(n);
    let mut dense_rows = Vec::with_capacity(n);
    let mut graph_nodes = Vec::with_capacity(n);
    for i in 0..n {
        let f0 = table.f0(i);
        let bit = assignment
            .as_ref()
            .map(|a| a.bit(&table.cve_ids[i], &table.commit_ids[i]))
            .unwrap_or(false);
        let (s, d) = schema.encode(&f0, bit, &sidecar.binning);
        sparse_rows.push(s);
        dense_rows.push(d);
        let node = graphs
            .first()
            .and_then(|g| g.node_index.get(&table.commit_ids[i]))
            .map(|&idx| (0usize, idx));
        graph_nodes.push(node);
    }
    let labels = table.labels.clone();
    let batch = train_model::batch_from_rows(sparse_rows, dense_rows, labels, graph_nodes)?;
    Ok((table, batch))
}

fn cmd_train(
    features: PathBuf,
    graph: Option<PathBuf>,
    f1: Option<PathBuf>,
    config: Option<PathBuf>,
    out: PathBuf,
) -> Result<()> {
    let config = match config {
        Some(path) => PipelineConfig::load(&path)?,
        None => PipelineConfig::default(),
    };
    let (_, sidecar) = store::load(&features)?;
    let graphs = match &graph {
        Some(path) => load_graph_tensors(path, sidecar.embed_dim)?,
        None => Vec::new(),
    };
    let (_, batch) = assemble_batch(&features, f1.as_deref(), &config, &graphs)?;
    let schema = crate::features::EncoderSchema {
        n_bins: sidecar.n_bins,
        include_f1: f1.is_some(),
        embed_dim: sidecar.embed_dim,
        crosses: config.model.cross_features.clone(),
    };
    let dims = crate::model::ModelDims {
        d_sparse: schema.sparse_dim(),
        d_dense: schema.dense_dim(),
        d_embed: config.model.d_embed,
        mlp_width: config.model.mlp_width,
        mlp_layers: config.model.mlp_layers,
        node_dim: sidecar.embed_dim,
        gat_heads: config.model.gat_heads,
        gat_layers: config.model.gat_layers,
    };
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(config.train.seed);
    let mut params = crate::model::JointParams::init(
        dims,
        config.model.activation,
        config.model.leaky_slope,
        &mut rng,
    )?;
    let (offset, mul) = schema.dense_scale(&sidecar.binning);
    params.wide_deep.set_dense_scale(&offset, &mul);
    let result = train_model::train(params, &batch, &graphs, &config.train, Some(&out))?;
    checkpoint::save(
        &out,
        &result.params,
        &serde_json::json!({
            "features": features.display().to_string(),
            "final_loss": result.loss_trace.last(),
            "epochs": result.loss_trace.len(),
        }),
    )?;
    println!(
        "trained {} epochs, final loss {:.6}; checkpoint at {}",
        result.loss_trace.len(),
        result.loss_trace.last().copied().unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

fn cmd_rank(
    features: PathBuf,
    checkpoint_path: PathBuf,
    graph: Option<PathBuf>,
    f1: Option<PathBuf>,
    config: Option<PathBuf>,
    out: PathBuf,
) -> Result<()> {
    let config = match config {
        Some(path) => PipelineConfig::load(&path)?,
        None => PipelineConfig::default(),
    };
    let (params, _manifest) = checkpoint::load(&checkpoint_path)?;
    let (_, sidecar) = store::load(&features)?;
    let graphs = match &graph {
        Some(path) => load_graph_tensors(path, sidecar.embed_dim)?,
        None => Vec::new(),
    };
    let (table, batch) = assemble_batch(&features, f1.as_deref(), &config, &graphs)?;
    let scores = score_batch(&params, &batch, &graphs)?;
    let mut per_cve: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for (i, score) in scores.into_iter().enumerate() {
        per_cve
            .entry(table.cve_ids[i].clone())
            .or_default()
            .push((table.commit_ids[i].clone(), score));
    }
    let mut ranking = Ranking::new(Stage::Ranking2);
    for (cve, scored) in per_cve {
        ranking.insert(&cve, scored);
    }
    ranking.save_csv(&out)?;
    println!(
        "ranking for {} CVEs written to {}",
        ranking.per_cve.len(),
        out.display()
    );
    Ok(())
}

fn cmd_evaluate(rankings: PathBuf, labels_path: PathBuf, k: usize) -> Result<()> {
    let ranking = Ranking::load_csv(&rankings, Stage::Ranking2)?;
    let text = util::read_string(&labels_path)?;
    let mut labels = Labels::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let label: PatchLabel = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            path: labels_path.display().to_string(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        labels.entry(label.cve_id).or_default().insert(label.commit_id);
    }
    let ranked: RankedLists = ranking.ranked_ids();
    let r = eval::recall_at_k(&ranked, &labels, k)?;
    let n = eval::ndcg_at_k(&ranked, &labels, k)?;
    let m = eval::manual_effort_at_k(&ranked, &labels, k)?;
    println!("R@{k} = {r:.4}");
    println!("N@{k} = {n:.4}");
    println!("M@{k} = {m:.2}");
    Ok(())
}

fn cmd_report(metrics: PathBuf, out: Option<PathBuf>, paper_ref: Option<String>) -> Result<()> {
    let report = MetricsReport::from_json(&util::read_string(&metrics)?)?;
    let reference = match paper_ref.as_deref() {
        None => None,
        Some("builtin") => Some(ReferenceTables::builtin()),
        Some(path) => Some(serde_json::from_str(&util::read_string(Path::new(path))?)?),
    };
    let markdown = report.to_markdown(reference.as_ref());
    match out {
        Some(path) => {
            util::atomic_write(&path, markdown.as_bytes())?;
            println!("report written to {}", path.display());
        }
        None => print!("{markdown}"),
    }
    Ok(())
}

/// One-line cost summary; used by examples.
pub fn describe_cost(n_f1: usize, n_f2: usize) -> String {
    let estimate = estimate_cost(n_f1, n_f2);
    format!(
        "{} + {} queries = {:.2} USD, {:.0} s serial",
        estimate.n_f1_queries, estimate.n_f2_queries, estimate.usd, estimate.est_wallclock_seconds
    )
}
