//! Ranking metrics and report generation.
//!
//! Three metrics, each at cutoff k: R@k is the share of CVEs whose
//! labeled patches *all* sit within the top k; N@k is standard NDCG with
//! binary relevance; M@k is the mean manual effort `min(r, k)` where `r`
//! is the rank of the CVE's worst-placed patch.

use crate::corpus::FoldAssignment;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

/// cve_id -> labeled patch commit ids.
pub type Labels = BTreeMap<String, BTreeSet<String>>;
/// cve_id -> candidate commit ids in rank order (best first).
pub type RankedLists = BTreeMap<String, Vec<String>>;

/// Rank (1-based) of every patch of one CVE; a patch missing from the
/// candidate list ranks "beyond any k".
fn patch_ranks(ranked: &[String], patches: &BTreeSet<String>) -> Vec<usize> {
    let position: BTreeMap<&str, usize> = ranked
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i + 1))
        .collect();
    patches
        .iter()
        .map(|p| position.get(p.as_str()).copied().unwrap_or(usize::MAX))
        .collect()
}

fn labels_of<'a>(labels: &'a Labels, cve_id: &str) -> Result<&'a BTreeSet<String>> {
    labels
        .get(cve_id)
        .filter(|p| !p.is_empty())
        .ok_or_else(|| Error::MissingLabels(cve_id.to_string()))
}

/// Fraction of CVEs whose every labeled patch has rank <= k.
pub fn recall_at_k(rankings: &RankedLists, labels: &Labels, k: usize) -> Result<f64> {
    let mut hit = 0usize;
    for (cve_id, ranked) in rankings {
        let patches = labels_of(labels, cve_id)?;
        if patch_ranks(ranked, patches).iter().all(|&r| r <= k) {
            hit += 1;
        }
    }
    Ok(hit as f64 / rankings.len().max(1) as f64)
}

/// Mean NDCG@k with binary relevance. The ideal ranking packs all patches
/// at the top (capped at k), so the score stays within [0, 1].
pub fn ndcg_at_k(rankings: &RankedLists, labels: &Labels, k: usize) -> Result<f64> {
    let mut total = 0.0;
    for (cve_id, ranked) in rankings {
        let patches = labels_of(labels, cve_id)?;
        let dcg: f64 = ranked
            .iter()
            .take(k)
            .enumerate()
            .filter(|(_, id)| patches.contains(*id))
            .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
            .sum();
        let ideal: f64 = (0..patches.len().min(k))
            .map(|i| 1.0 / ((i + 2) as f64).log2())
            .sum();
        total += dcg / ideal;
    }
    Ok(total / rankings.len().max(1) as f64)
}

/// Mean `min(r, k)` where `r` is the rank of the worst-placed patch.
pub fn manual_effort_at_k(rankings: &RankedLists, labels: &Labels, k: usize) -> Result<f64> {
    let mut total = 0.0;
    for (cve_id, ranked) in rankings {
        let patches = labels_of(labels, cve_id)?;
        let worst = patch_ranks(ranked, patches).into_iter().max().unwrap_or(usize::MAX);
        total += worst.min(k) as f64;
    }
    Ok(total / rankings.len().max(1) as f64)
}

/// Binary confusion counts with precision and recall. Precision with no
/// predicted positives is degenerate: reported as 0 and flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionStats {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub degenerate_precision: bool,
}

pub fn confusion_stats(bits: &[bool], labels: &[bool]) -> Result<ConfusionStats> {
    if bits.len() != labels.len() {
        return Err(Error::LengthMismatch {
            bits: bits.len(),
            labels: labels.len(),
        });
    }
    let mut stats = ConfusionStats {
        tp: 0,
        fn_: 0,
        fp: 0,
        tn: 0,
        precision: 0.0,
        recall: 0.0,
        degenerate_precision: false,
    };
    for (&bit, &label) in bits.iter().zip(labels) {
        match (label, bit) {
            (true, true) => stats.tp += 1,
            (true, false) => stats.fn_ += 1,
            (false, true) => stats.fp += 1,
            (false, false) => stats.tn += 1,
        }
    }
    let predicted_positive = stats.tp + stats.fp;
    if predicted_positive == 0 {
        stats.degenerate_precision = true;
    } else {
        stats.precision = stats.tp as f64 / predicted_positive as f64;
    }
    let actual_positive = stats.tp + stats.fn_;
    stats.recall = if actual_positive == 0 {
        0.0
    } else {
        stats.tp as f64 / actual_positive as f64
    };
    Ok(stats)
}

/// From precomputed confusion counts (consistency checks against
/// published matrices).
pub fn confusion_from_counts(tp: u64, fn_: u64, fp: u64, tn: u64) -> ConfusionStats {
    let predicted = tp + fp;
    let actual = tp + fn_;
    ConfusionStats {
        tp,
        fn_,
        fp,
        tn,
        precision: if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 },
        recall: if actual == 0 { 0.0 } else { tp as f64 / actual as f64 },
        degenerate_precision: predicted == 0,
    }
}

/// One row of metric values over k = 1..=10.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricRow {
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub effort: Vec<f64>,
}

/// All three metrics over k = 1..=max_k for one set of rankings.
pub fn metric_row(rankings: &RankedLists, labels: &Labels, max_k: usize) -> Result<MetricRow> {
    let mut row = MetricRow::default();
    for k in 1..=max_k {
        row.recall.push(recall_at_k(rankings, labels, k)?);
        row.ndcg.push(ndcg_at_k(rankings, labels, k)?);
        row.effort.push(manual_effort_at_k(rankings, labels, k)?);
    }
    Ok(row)
}

/// Macro averaging: metrics per fold, then the mean over folds holding at
/// least one of the selected CVEs. `pooled = true` evaluates all selected
/// CVEs as one set instead.
pub fn metric_row_with_folds(
    rankings: &RankedLists,
    labels: &Labels,
    folds: Option<&FoldAssignment>,
    cves: &BTreeSet<String>,
    max_k: usize,
    pooled: bool,
) -> Result<MetricRow> {
    let subset = |ids: &BTreeSet<String>| -> RankedLists {
        rankings
            .iter()
            .filter(|(cve, _)| ids.contains(*cve))
            .map(|(cve, list)| (cve.clone(), list.clone()))
            .collect()
    };
    let folds = match folds {
        Some(f) if !pooled => f,
        _ => {
            let selected = subset(cves);
            return metric_row(&selected, labels, max_k);
        }
    };
    let mut rows = Vec::new();
    for fold in 0..folds.n_folds {
        let fold_cves: BTreeSet<String> = folds
            .cves_in_fold(fold)
            .into_iter()
            .filter(|cve| cves.contains(cve))
            .collect();
        if fold_cves.is_empty() {
            continue;
        }
        let selected = subset(&fold_cves);
        if selected.is_empty() {
            continue;
        }
        rows.push(metric_row(&selected, labels, max_k)?);
    }
    if rows.is_empty() {
        return Err(Error::MissingLabels("no CVEs in any fold".into()));
    }
    let mut mean = MetricRow {
        recall: vec![0.0; max_k],
        ndcg: vec![0.0; max_k],
        effort: vec![0.0; max_k],
    };
    for row in &rows {
        for k in 0..max_k {
            mean.recall[k] += row.recall[k];
            mean.ndcg[k] += row.ndcg[k];
            mean.effort[k] += row.effort[k];
        }
    }
    let n = rows.len() as f64;
    for k in 0..max_k {
        mean.recall[k] /= n;
        mean.ndcg[k] /= n;
        mean.effort[k] /= n;
    }
    Ok(mean)
}

/// LLM usage bookkeeping attached to a report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostTally {
    pub n_f1_queries: usize,
    pub n_f2_queries: usize,
    pub usd: f64,
    pub client_calls: u64,
    pub cache_hits: u64,
}

/// The full evaluation artifact: per partition (Full / 1-1 / 1-N), per
/// feature-set label, the three metric rows, plus optional confusion and
/// cost sections.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub max_k: usize,
    pub averaging: String,
    /// partition -> feature-set label -> metrics
    pub tables: BTreeMap<String, BTreeMap<String, MetricRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostTally>,
}

/// Display-only reference values rendered next to measured ones.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReferenceTables {
    /// metric -> partition -> feature label -> values over k (percent for
    /// recall/ndcg, plain for effort)
    pub recall: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
    pub ndcg: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
    pub effort: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
}

impl ReferenceTables {
    /// The reference measurements shipped with the crate.
    pub fn builtin() -> Self {
        serde_json::from_str(include_str!("../../data/paper_tables.json"))
            .expect("built-in reference tables parse")
    }
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Render the three metric tables as markdown, optionally interleaving
    /// reference rows labeled "reference (not asserted)".
    pub fn to_markdown(&self, reference: Option<&ReferenceTables>) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# Ranking evaluation\n");
        let _ = writeln!(out, "Averaging: {}\n", self.averaging);
        let sections: [(&str, fn(&MetricRow) -> &Vec<f64>, bool); 3] = [
            ("Recall (R@k)", |r| &r.recall, true),
            ("NDCG (N@k)", |r| &r.ndcg, true),
            ("Manual effort (M@k)", |r| &r.effort, false),
        ];
        for (title, select, percent) in sections {
            let _ = writeln!(out, "## {title}\n");
            let mut header = String::from("| Data | Feature |");
            let mut rule = String::from("|---|---|");
            for k in 1..=self.max_k {
                let _ = write!(header, " {k} |");
                rule.push_str("---|");
            }
            let _ = writeln!(out, "{header}");
            let _ = writeln!(out, "{rule}");
            for (partition, by_feature) in &self.tables {
                for (feature, row) in by_feature {
                    let mut line = format!("| {partition} | {feature} |");
                    for v in select(row) {
                        if percent {
                            let _ = write!(line, " {:.2}% |", v * 100.0);
                        } else {
                            let _ = write!(line, " {v:.2} |");
                        }
                    }
                    let _ = writeln!(out, "{line}");
                    if let Some(reference) = reference {
                        let table = match title {
                            "Recall (R@k)" => &reference.recall,
                            "NDCG (N@k)" => &reference.ndcg,
                            _ => &reference.effort,
                        };
                        if let Some(values) =
                            table.get(partition).and_then(|m| m.get(feature))
                        {
                            let mut line =
                                format!("| {partition} | {feature} (reference, not asserted) |");
                            for v in values.iter().take(self.max_k) {
                                if percent {
                                    let _ = write!(line, " {v:.2}% |");
                                } else {
                                    let _ = write!(line, " {v:.2} |");
                                }
                            }
                            let _ = writeln!(out, "{line}");
                        }
                    }
                }
            }
            let _ = writeln!(out);
        }
        if let Some(confusion) = &self.confusion {
            let _ = writeln!(out, "## Direct-verdict confusion\n");
            let _ = writeln!(out, "| TP | FN | FP | TN | precision | recall |");
            let _ = writeln!(out, "|---|---|---|---|---|---|");
            let degenerate = if confusion.degenerate_precision { " (degenerate)" } else { "" };
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {:.2}%{} | {:.2}% |",
                confusion.tp,
                confusion.fn_,
                confusion.fp,
                confusion.tn,
                confusion.precision * 100.0,
                degenerate,
                confusion.recall * 100.0
            );
            let _ = writeln!(out);
        }
        if let Some(cost) = &self.cost {
            let _ = writeln!(out, "## Feedback cost\n");
            let _ = writeln!(
                out,
                "- queries: {} relevance + {} relation = {}",
                cost.n_f1_queries,
                cost.n_f2_queries,
                cost.n_f1_queries + cost.n_f2_queries
            );
            let _ = writeln!(out, "- estimated spend: {:.2} USD", cost.usd);
            let _ = writeln!(
                out,
                "- client calls: {} (cache hits: {})",
                cost.client_calls, cost.cache_hits
            );
        }
        out
    }
}

/// Per-cell difference (B - A) between two reports with identical shape;
/// used for ablation deltas.
pub fn report_delta(a: &MetricsReport, b: &MetricsReport) -> MetricsReport {
    let mut out = b.clone();
    for (partition, by_feature) in &mut out.tables {
        for (feature, row) in by_feature {
            if let Some(base) = a.tables.get(partition).and_then(|m| m.get(feature)) {
                for k in 0..row.recall.len().min(base.recall.len()) {
                    row.recall[k] -= base.recall[k];
                    row.ndcg[k] -= base.ndcg[k];
                    row.effort[k] -= base.effort[k];
                }
            }
        }
    }
    out.averaging = format!("{} (delta)", out.averaging);
    out
}
