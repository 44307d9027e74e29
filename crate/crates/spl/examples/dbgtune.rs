use spl::eval::recall_at_k;
use spl::pipeline::{Pipeline, PipelineConfig, Ranking, Stage};
use spl::synthetic::{generate, SyntheticConfig};
use std::collections::BTreeSet;

fn r10_1n(r: &Ranking, corpus: &spl::corpus::Corpus) -> f64 {
    let labels = corpus.labels_by_cve();
    let (_, one_n) = spl::corpus::partition_by_cardinality(corpus);
    let subset: spl::eval::RankedLists = r
        .ranked_ids()
        .into_iter()
        .filter(|(cve, _)| one_n.contains(cve))
        .collect();
    recall_at_k(&subset, &labels, 10).unwrap()
}

fn main() -> spl::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let base_seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.005);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(30);
    let alpha: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.02);
    let dim: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(64);
    let bs: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(256);
    let dropout: f64 = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(0.4);
    let kf2: usize = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(3);
    let corpus = generate(&SyntheticConfig { seed: base_seed, ..SyntheticConfig::default() });
    let config = PipelineConfig::from_toml(&format!(r#"
seed = {s}
n_folds = 5
k_f1 = 100
k_f2 = {kf2}
feature_set = ["f0", "f1", "f2"]
[llm]
kind = "mock"
mock_fp = 0.13
mock_fn = 0.13
mock_seed = {s}
[embedding]
dim = 32
[model]
d_embed = {dim}
mlp_width = {dim}
mlp_layers = 3
[train]
learning_rate = {lr}
dropout = {dropout}
epochs = {epochs}
batch_size = {bs}
focal_alpha = {alpha}
focal_gamma = 2.0
seed = {s}
[workers]
features = 4
llm = 4
"#, s = base_seed + 100))?;
    let dir = format!("/tmp/tune-{base_seed}-{lr}-{epochs}-{alpha}-{dim}-{bs}-{dropout}-{kf2}");
    let _ = std::fs::remove_dir_all(&dir);
    let mut p = Pipeline::new(corpus.clone(), config, &dir)?;
    let t = std::time::Instant::now();
    let report = p.run_ablation()?;
    let r0 = Ranking::load_csv(std::path::Path::new(&format!("{dir}/ranking0.csv")), Stage::Ranking0).unwrap();
    let r1 = Ranking::load_csv(std::path::Path::new(&format!("{dir}/ranking1.csv")), Stage::Ranking1).unwrap();
    // how often are BOTH patches' F1 bits set for 1-N cves?
    let f1 = spl::feedback::F1Assignment::load(std::path::Path::new(&format!("{dir}/f1.json"))).unwrap();
    let (_, one_n) = spl::corpus::partition_by_cardinality(&corpus);
    let mut both = 0;
    for cve in &one_n {
        let patches = corpus.patches_of(cve);
        if patches.iter().all(|p| f1.bit(cve, p)) { both += 1; }
    }
    // endorsed edges between true co-patches
    let mut edges_ok = 0;
    let mut edge_total = 0;
    for repo in corpus.commits.keys() {
        let safe = repo.replace('/', "_");
        if let Ok(g) = spl::graph::load_graph(std::path::Path::new(&format!("{dir}/graph")), &safe) {
            edge_total += g.n_endorsed_edges();
            let co: BTreeSet<(String,String)> = one_n.iter().flat_map(|cve| {
                let p = corpus.patches_of(cve);
                if p.len() == 2 && corpus.repo_of(cve) == Some(repo.as_str()) {
                    let (a, b) = (p[0].clone(), p[1].clone());
                    Some(if a <= b { (a, b) } else { (b, a) })
                } else { None }
            }).collect();
            for e in g.edges.iter().filter(|e| e.weight == 1) {
                if co.contains(&(e.u.clone(), e.v.clone())) { edges_ok += 1; }
            }
        }
    }
    let one_n_tbl = &report.tables["1-N"];
    println!(
        "seed {base_seed} lr={lr} ep={epochs} a={alpha} d={dim}: R0={:.0} R1={:.0} | F0={:.1} F0F1={:.1} F0F1F2={:.1} | bits-both={both}/20 co-edges={edges_ok}/{edge_total} ({:.0}s)",
        r10_1n(&r0, &corpus) * 100.0,
        r10_1n(&r1, &corpus) * 100.0,
        one_n_tbl["F0"].recall[9] * 100.0,
        one_n_tbl["F0+F1"].recall[9] * 100.0,
        one_n_tbl["F0+F1+F2"].recall[9] * 100.0,
        t.elapsed().as_secs_f64()
    );
    Ok(())
}
