//! Shared tokenization and text-similarity primitives.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Tokenize into lowercase tokens. Identifier-like words are kept whole
/// (`ov511_mode_init_regs`, `cve-2019-10131`) and additionally split on
/// `_`, `-` and camelCase boundaries, so both the identifier and its parts
/// can match.
pub fn tokenize_text(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for raw in text.split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '-')) {
        let word = raw.trim_matches(|c| c == '_' || c == '-');
        if word.is_empty() {
            continue;
        }
        let whole = word.to_lowercase();
        let parts = split_identifier(word);
        if parts.len() > 1 {
            for part in parts {
                let part = part.to_lowercase();
                if part != whole {
                    tokens.push(part);
                }
            }
        }
        tokens.push(whole);
    }
    tokens
}

/// Split an identifier on `_`, `-` and camelCase boundaries.
fn split_identifier(word: &str) -> Vec<String> {
    let mut parts = Vec::new();
    for segment in word.split(['_', '-']) {
        if segment.is_empty() {
            continue;
        }
        let chars: Vec<char> = segment.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let prev = chars[i - 1];
            let cur = chars[i];
            let lower_to_upper = !prev.is_uppercase() && prev.is_alphabetic() && cur.is_uppercase();
            let acronym_end = prev.is_uppercase()
                && cur.is_uppercase()
                && chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            if lower_to_upper || acronym_end {
                parts.push(chars[start..i].iter().collect());
                start = i;
            }
        }
        parts.push(chars[start..].iter().collect());
    }
    parts
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "been", "before", "by", "can", "could", "do",
    "does", "for", "from", "has", "have", "in", "into", "is", "it", "its", "may", "not", "of",
    "on", "or", "that", "the", "their", "this", "to", "via", "was", "when", "which", "while",
    "with", "would",
];

/// Drop common English stopwords; similarity features use this, raw
/// identifier features do not.
pub fn without_stopwords(tokens: &[String]) -> Vec<String> {
    tokens
        .iter()
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .cloned()
        .collect()
}

/// Document-level token statistics gathered over the training fold only:
/// document frequency for idf and total occurrence counts for the
/// shared-word frequency features.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_docs: usize,
    pub df: BTreeMap<String, u32>,
    pub tf: BTreeMap<String, f64>,
}

impl CorpusStats {
    pub fn add_document(&mut self, tokens: &[String]) {
        self.n_docs += 1;
        let mut seen = BTreeSet::new();
        for token in tokens {
            *self.tf.entry(token.clone()).or_insert(0.0) += 1.0;
            if seen.insert(token) {
                *self.df.entry(token.clone()).or_insert(0) += 1;
            }
        }
    }

    /// idf(t) = ln((N + 1) / df(t)); out-of-vocabulary tokens get df = 1
    /// in the denominator, i.e. idf = ln(N + 1). Always positive (N is
    /// floored at one document so a degenerate table keeps idf nonzero).
    pub fn idf(&self, token: &str) -> f64 {
        let df = self.df.get(token).copied().unwrap_or(0).max(1) as f64;
        ((self.n_docs.max(1) as f64 + 1.0) / df).ln()
    }

    pub fn frequency(&self, token: &str) -> f64 {
        self.tf.get(token).copied().unwrap_or(0.0)
    }
}

/// Cosine similarity of the tf-idf vectors of two token lists. Zero when
/// either vector is all-zero.
pub fn tfidf_cosine(a_tokens: &[String], b_tokens: &[String], stats: &CorpusStats) -> f64 {
    let a = tfidf_weights(a_tokens, stats);
    let b = tfidf_weights(b_tokens, stats);
    let mut dot = 0.0;
    for (token, wa) in &a {
        if let Some(wb) = b.get(token) {
            dot += wa * wb;
        }
    }
    let norm_a: f64 = a.values().map(|w| w * w).sum::<f64>().sqrt();
    let norm_b: f64 = b.values().map(|w| w * w).sum::<f64>().sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        return 0.0;
    }
    (dot / (norm_a * norm_b)).clamp(0.0, 1.0)
}

fn tfidf_weights(tokens: &[String], stats: &CorpusStats) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, f64> = BTreeMap::new();
    for token in tokens {
        *counts.entry(token.clone()).or_insert(0.0) += 1.0;
    }
    for (token, count) in counts.iter_mut() {
        *count *= stats.idf(token);
    }
    counts
}

/// Statistics over the tokens shared by two lists.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SharedWordStats {
    pub num: f64,
    /// shared count over the number of distinct tokens on the `a` side
    /// (the vulnerability-description side).
    pub ratio: f64,
    pub max: f64,
    pub sum: f64,
    pub avg: f64,
    /// population variance.
    pub var: f64,
}

pub fn shared_word_stats(
    a_tokens: &[String],
    b_tokens: &[String],
    stats: &CorpusStats,
) -> SharedWordStats {
    let a_set: BTreeSet<&String> = a_tokens.iter().collect();
    let b_set: BTreeSet<&String> = b_tokens.iter().collect();
    let shared: Vec<&&String> = a_set.intersection(&b_set).collect();
    if shared.is_empty() {
        return SharedWordStats::default();
    }
    let freqs: Vec<f64> = shared.iter().map(|t| stats.frequency(t)).collect();
    let num = shared.len() as f64;
    let sum: f64 = freqs.iter().sum();
    let max = freqs.iter().cloned().fold(f64::MIN, f64::max);
    let avg = sum / num;
    let var = freqs.iter().map(|f| (f - avg) * (f - avg)).sum::<f64>() / num;
    SharedWordStats {
        num,
        ratio: num / a_set.len() as f64,
        max,
        sum,
        avg,
        var,
    }
}

/// Cosine similarity of two token *sets* (used for the vulnerability-type
/// relevance feature, where only membership matters).
pub fn set_cosine(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let shared = a.intersection(b).count() as f64;
    shared / ((a.len() as f64).sqrt() * (b.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenizer_keeps_identifiers_and_parts() {
        let tokens = tokenize_text("ov511_mode_init_regs");
        let set: BTreeSet<&str> = tokens.iter().map(String::as_str).collect();
        assert_eq!(
            set,
            ["ov511_mode_init_regs", "ov511", "mode", "init", "regs"]
                .into_iter()
                .collect()
        );
    }

    #[test]
    fn tokenizer_empty_input() {
        assert!(tokenize_text("").is_empty());
        assert!(tokenize_text("  \t\n").is_empty());
    }

    #[test]
    fn tokenizer_hyphenated_and_cve_ids() {
        let tokens = tokenize_text("Fix CVE-2019-10131 off-by-one");
        let set: BTreeSet<&str> = tokens.iter().map(String::as_str).collect();
        for expected in ["cve-2019-10131", "off", "by", "one", "fix"] {
            assert!(set.contains(expected), "missing {expected} in {set:?}");
        }
    }

    #[test]
    fn tokenizer_camel_case() {
        let tokens = tokenize_text("getHTMLParser");
        let set: BTreeSet<&str> = tokens.iter().map(String::as_str).collect();
        for expected in ["gethtmlparser", "get", "html", "parser"] {
            assert!(set.contains(expected), "missing {expected} in {set:?}");
        }
    }

    fn uniform_stats() -> CorpusStats {
        // one document seen; every token OOV => idf = ln(2) for all,
        // which cancels in cosine, giving "uniform idf" behavior.
        CorpusStats {
            n_docs: 1,
            df: BTreeMap::new(),
            tf: BTreeMap::new(),
        }
    }

    #[test]
    fn tfidf_identical_is_one() {
        let a = toks(&["buffer", "overflow", "parser"]);
        assert!((tfidf_cosine(&a, &a, &uniform_stats()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tfidf_disjoint_is_zero() {
        let a = toks(&["alpha", "beta"]);
        let b = toks(&["gamma", "delta"]);
        assert_eq!(tfidf_cosine(&a, &b, &uniform_stats()), 0.0);
    }

    #[test]
    fn tfidf_half_overlap() {
        // a={x,y}, b={x,z}, uniform idf => cos((1,1,0),(1,0,1)) = 0.5
        let a = toks(&["x", "y"]);
        let b = toks(&["x", "z"]);
        assert!((tfidf_cosine(&a, &b, &uniform_stats()) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn idf_is_positive_for_in_vocab_and_ln_n_plus_one_for_oov() {
        let mut stats = CorpusStats::default();
        for _ in 0..4 {
            stats.add_document(&toks(&["common"]));
        }
        assert!(stats.idf("common") > 0.0);
        assert!((stats.idf("common") - (5.0f64 / 4.0).ln()).abs() < 1e-12);
        assert!((stats.idf("never-seen") - 5.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn shared_stats_empty_is_all_zero() {
        let stats = shared_word_stats(&toks(&["a1"]), &toks(&["b1"]), &uniform_stats());
        assert_eq!(stats, SharedWordStats::default());
    }

    #[test]
    fn shared_stats_single_token() {
        let mut cs = CorpusStats::default();
        cs.add_document(&toks(&["w", "w", "w", "w"]));
        let a = toks(&["w", "q"]);
        let b = toks(&["w"]);
        let s = shared_word_stats(&a, &b, &cs);
        assert_eq!(s.num, 1.0);
        assert!((s.ratio - 0.5).abs() < 1e-12);
        assert_eq!(s.max, 4.0);
        assert_eq!(s.sum, 4.0);
        assert_eq!(s.avg, 4.0);
        assert_eq!(s.var, 0.0);
    }

    #[test]
    fn shared_stats_two_tokens_population_variance() {
        let mut cs = CorpusStats::default();
        cs.add_document(&toks(&["p", "p", "q", "q", "q", "q", "q", "q"]));
        let a = toks(&["p", "q"]);
        let s = shared_word_stats(&a, &a, &cs);
        assert_eq!(s.max, 6.0);
        assert_eq!(s.sum, 8.0);
        assert_eq!(s.avg, 4.0);
        assert_eq!(s.var, 4.0);
    }

    #[test]
    fn stopwords_only_affect_filtered_lists() {
        let tokens = tokenize_text("the overflow of the buffer");
        let filtered = without_stopwords(&tokens);
        assert!(tokens.iter().any(|t| t == "the"));
        assert!(!filtered.iter().any(|t| t == "the"));
        assert!(filtered.iter().any(|t| t == "overflow"));
    }
}
