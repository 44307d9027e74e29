//! The three ranking metrics on a hand-built example, plus report
//! rendering with the bundled reference tables.
//!
//! ```bash
//! cargo run --example evaluate_rankings
//! ```

use spl::eval::{
    confusion_from_counts, manual_effort_at_k, metric_row, ndcg_at_k, recall_at_k, Labels,
    MetricsReport, RankedLists, ReferenceTables,
};
use std::collections::BTreeMap;

fn main() -> spl::Result<()> {
    // three CVEs; the third needs two patches and its second patch sits
    // at rank 4, so R@k only counts it from k=4 up
    let mut rankings = RankedLists::new();
    let mut labels = Labels::new();
    rankings.insert("CVE-2021-1000".into(), ids(&["p1", "x", "y", "z"]));
    labels.insert("CVE-2021-1000".into(), ids(&["p1"]).into_iter().collect());
    rankings.insert("CVE-2021-1001".into(), ids(&["x", "p2", "y", "z"]));
    labels.insert("CVE-2021-1001".into(), ids(&["p2"]).into_iter().collect());
    rankings.insert("CVE-2021-1002".into(), ids(&["pa", "x", "y", "pb"]));
    labels.insert("CVE-2021-1002".into(), ids(&["pa", "pb"]).into_iter().collect());

    for k in [1, 2, 4] {
        println!(
            "k={k}: R@k={:.3} N@k={:.3} M@k={:.2}",
            recall_at_k(&rankings, &labels, k)?,
            ndcg_at_k(&rankings, &labels, k)?,
            manual_effort_at_k(&rankings, &labels, k)?,
        );
    }

    // a confusion matrix from raw counts: precision stays low even when
    // recall is strong, which is exactly why raw verdicts cannot rank
    let confusion = confusion_from_counts(2141, 320, 12437, 80852);
    println!(
        "\ndirect-verdict confusion: precision {:.2}%, recall {:.2}%",
        confusion.precision * 100.0,
        confusion.recall * 100.0
    );

    // package everything as a report and render it against the bundled
    // reference tables (display only, never asserted)
    let mut report = MetricsReport {
        max_k: 10,
        averaging: "pooled CVEs".into(),
        tables: BTreeMap::new(),
        confusion: Some(confusion),
        cost: None,
    };
    report
        .tables
        .entry("Full".into())
        .or_default()
        .insert("F0+F1+F2".into(), metric_row(&rankings, &labels, 10)?);
    let reference = ReferenceTables::builtin();
    println!("\n{}", report.to_markdown(Some(&reference)));
    Ok(())
}

fn ids(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}
