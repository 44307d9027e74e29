//! Per-pair feature extraction: the handcrafted `F0` feature set computed
//! over one (CVE, commit) pair, plus the supporting corpus statistics,
//! binning, embeddings and the persisted feature store.
//!
//! `F0` has five groups: code behavior (file/function overlap between the
//! CVE description and the diff, change sizes), commit-message identifiers
//! (CVE/bug/issue/url mentions), textual similarity (shared words, tf-idf
//! cosine, deep text representations), security relevance (keyword overlap
//! with the CWE name) and the commit-to-publication time interval.

pub mod binning;
pub mod embed;
pub mod schema;
pub mod store;
pub mod text;

pub use binning::{bin_dense, build_binning_spec, BinEntry, BinningSpec, DEFAULT_N_BINS};
pub use embed::{EmbeddingProvider, HashEmbedder};
pub use schema::EncoderSchema;
pub use text::{
    shared_word_stats, tfidf_cosine, tokenize_text, without_stopwords, CorpusStats,
    SharedWordStats,
};

use crate::corpus::{CommitRecord, Corpus, CveRecord};
use crate::error::Result;
use indexmap::IndexMap;
use regex::Regex;
use std::collections::BTreeSet;
use std::sync::OnceLock;

/// Whether a feature feeds the wide path only (sparse) or also the deep
/// path (dense), mirroring the S/D column of the feature table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureClass {
    Sparse,
    Dense,
}

/// Value family, used for validation and one-hot widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    /// non-negative integer count
    Count,
    /// 0/1 indicator
    Flag,
    /// real in [0, 1]
    Ratio,
    /// unconstrained non-negative real
    Real,
    /// signed real (the time interval, in seconds)
    Signed,
}

#[derive(Debug, Clone, Copy)]
pub struct FeatureDef {
    pub name: &'static str,
    pub kind: FeatureKind,
    pub class: FeatureClass,
}

use FeatureClass::{Dense, Sparse};
use FeatureKind::{Count, Flag, Ratio, Real, Signed};

/// The full scalar feature enumeration, in schema order. The two deep
/// text representations are vectors and live outside this table.
pub const FEATURES: &[FeatureDef] = &[
    // code behavior
    FeatureDef { name: "code_added_num", kind: Count, class: Sparse },
    FeatureDef { name: "code_deleted_num", kind: Count, class: Sparse },
    FeatureDef { name: "code_modified_num", kind: Count, class: Sparse },
    FeatureDef { name: "same_filepath_num", kind: Count, class: Sparse },
    FeatureDef { name: "same_filepath_ratio", kind: Ratio, class: Sparse },
    FeatureDef { name: "unrelated_filepath_num", kind: Count, class: Sparse },
    FeatureDef { name: "same_file_num", kind: Count, class: Sparse },
    FeatureDef { name: "same_file_ratio", kind: Ratio, class: Sparse },
    FeatureDef { name: "unrelated_file_num", kind: Count, class: Sparse },
    FeatureDef { name: "same_function_num", kind: Count, class: Sparse },
    FeatureDef { name: "same_function_ratio", kind: Ratio, class: Sparse },
    FeatureDef { name: "unrelated_function_num", kind: Count, class: Sparse },
    // commit message identifiers
    FeatureDef { name: "cve_num", kind: Count, class: Sparse },
    FeatureDef { name: "bug_num", kind: Count, class: Sparse },
    FeatureDef { name: "issue_num", kind: Count, class: Sparse },
    FeatureDef { name: "url_num", kind: Count, class: Sparse },
    FeatureDef { name: "cve_match", kind: Flag, class: Sparse },
    FeatureDef { name: "bug_match", kind: Flag, class: Sparse },
    // textual similarity
    FeatureDef { name: "cwe_msg_same_num", kind: Count, class: Dense },
    FeatureDef { name: "cwe_msg_same_ratio", kind: Ratio, class: Dense },
    FeatureDef { name: "tfidf_similarity", kind: Ratio, class: Dense },
    FeatureDef { name: "shared_msg_word_num", kind: Count, class: Dense },
    FeatureDef { name: "shared_msg_word_ratio", kind: Ratio, class: Dense },
    FeatureDef { name: "shared_code_word_num", kind: Count, class: Dense },
    FeatureDef { name: "shared_code_word_ratio", kind: Ratio, class: Dense },
    FeatureDef { name: "shared_msg_word_freq_max", kind: Real, class: Dense },
    FeatureDef { name: "shared_msg_word_freq_sum", kind: Real, class: Dense },
    FeatureDef { name: "shared_msg_word_freq_avg", kind: Real, class: Dense },
    FeatureDef { name: "shared_msg_word_freq_var", kind: Real, class: Dense },
    FeatureDef { name: "shared_code_word_freq_max", kind: Real, class: Dense },
    FeatureDef { name: "shared_code_word_freq_sum", kind: Real, class: Dense },
    FeatureDef { name: "shared_code_word_freq_avg", kind: Real, class: Dense },
    FeatureDef { name: "shared_code_word_freq_var", kind: Real, class: Dense },
    // security relevance
    FeatureDef { name: "vuln_type_relevance", kind: Ratio, class: Dense },
    // temporal
    FeatureDef { name: "time_interval", kind: Signed, class: Dense },
];

pub fn sparse_feature_names() -> Vec<&'static str> {
    FEATURES.iter().filter(|f| f.class == Sparse).map(|f| f.name).collect()
}

pub fn dense_feature_names() -> Vec<&'static str> {
    FEATURES.iter().filter(|f| f.class == Dense).map(|f| f.name).collect()
}

/// One extracted feature vector for a (CVE, commit) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Vector {
    pub sparse: IndexMap<String, f64>,
    pub dense: IndexMap<String, f64>,
    pub text_embed_cve: Vec<f64>,
    pub text_embed_commit: Vec<f64>,
}

impl F0Vector {
    pub fn get(&self, name: &str) -> f64 {
        self.sparse
            .get(name)
            .or_else(|| self.dense.get(name))
            .copied()
            .unwrap_or(0.0)
    }

    /// Check the per-kind value constraints.
    pub fn validate(&self) -> Result<()> {
        for def in FEATURES {
            let v = self.get(def.name);
            let ok = match def.kind {
                Count => v >= 0.0 && v.fract() == 0.0,
                Flag => v == 0.0 || v == 1.0,
                Ratio => (0.0..=1.0).contains(&v),
                Real => v >= 0.0,
                Signed => v.is_finite(),
            };
            if !ok {
                return Err(crate::error::Error::CorpusInvariant(format!(
                    "feature {} violates its {:?} constraint: {}",
                    def.name, def.kind, v
                )));
            }
        }
        Ok(())
    }
}

/// The vulnerability keyword lexicon (`data/vuln_keywords.txt`), matched
/// against lowercase tokens.
#[derive(Debug, Clone)]
pub struct Lexicon {
    terms: BTreeSet<String>,
}

impl Lexicon {
    pub fn from_text(text: &str) -> Self {
        let mut terms = BTreeSet::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            for token in tokenize_text(line) {
                terms.insert(token);
            }
        }
        Self { terms }
    }

    /// The built-in lexicon shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_text(include_str!("../../data/vuln_keywords.txt"))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Lexicon terms present among `tokens`.
    pub fn matches(&self, tokens: &[String]) -> BTreeSet<String> {
        tokens
            .iter()
            .filter(|t| self.terms.contains(*t))
            .cloned()
            .collect()
    }
}

struct Patterns {
    path_like: Regex,
    func_call: Regex,
    func_word: Regex,
    hunk_func: Regex,
    cve_id: Regex,
    bug_id: Regex,
    issue_id: Regex,
    url: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        path_like: Regex::new(r"[\w/][\w/.-]*\.\w+").expect("static regex"),
        func_call: Regex::new(r"([A-Za-z_][A-Za-z0-9_]*)\s*\(\)").expect("static regex"),
        func_word: Regex::new(r"([A-Za-z_][A-Za-z0-9_]*)\s+functions?\b").expect("static regex"),
        hunk_func: Regex::new(r"([A-Za-z_][A-Za-z0-9_]*)\s*\(").expect("static regex"),
        cve_id: Regex::new(r"(?i)CVE-\d{4}-\d{4,}").expect("static regex"),
        bug_id: Regex::new(r"(?i)\bbug[\s#:=-]*(\d+)").expect("static regex"),
        issue_id: Regex::new(r"(?i)\bissue[\s#:=-]*\d+|#\d+").expect("static regex"),
        url: Regex::new(r"https?://\S+").expect("static regex"),
    })
}

/// File-ish and function-ish mentions pulled out of free text with the
/// path / `name()` / "name function" heuristics.
#[derive(Debug, Default, Clone)]
pub struct TextMentions {
    pub paths: BTreeSet<String>,
    pub files: BTreeSet<String>,
    pub functions: BTreeSet<String>,
}

pub fn extract_mentions(text: &str) -> TextMentions {
    let p = patterns();
    let mut mentions = TextMentions::default();
    for m in p.path_like.find_iter(text) {
        let path = m.as_str().trim_matches('.').to_lowercase();
        if path.is_empty() {
            continue;
        }
        let file = path.rsplit('/').next().unwrap_or(&path).to_string();
        mentions.paths.insert(path.clone());
        mentions.files.insert(file);
    }
    for cap in p.func_call.captures_iter(text) {
        mentions.functions.insert(cap[1].to_lowercase());
    }
    for cap in p.func_word.captures_iter(text) {
        mentions.functions.insert(cap[1].to_lowercase());
    }
    mentions
}

/// Files and functions touched by a commit, from diff paths and hunk
/// headers.
pub fn commit_mentions(commit: &CommitRecord) -> TextMentions {
    let p = patterns();
    let mut mentions = TextMentions::default();
    for diff in &commit.diffs {
        let path = diff.file_path.to_lowercase();
        if path.is_empty() {
            continue;
        }
        let file = path.rsplit('/').next().unwrap_or(&path).to_string();
        mentions.paths.insert(path);
        mentions.files.insert(file);
        for header in &diff.hunk_headers {
            // the function context is what follows the closing "@@"
            let context = header.rsplit("@@").next().unwrap_or(header);
            if let Some(cap) = p.hunk_func.captures_iter(context).last() {
                mentions.functions.insert(cap[1].to_lowercase());
            }
        }
    }
    mentions
}

fn ratio(num: usize, denom: usize) -> f64 {
    if denom == 0 {
        0.0
    } else {
        num as f64 / denom as f64
    }
}

/// Everything extraction needs besides the pair itself. The statistics
/// must come from the training fold only.
pub struct FeatureExtractor<'a> {
    pub stats: &'a CorpusStats,
    pub provider: &'a dyn EmbeddingProvider,
    pub lexicon: &'a Lexicon,
}

impl<'a> FeatureExtractor<'a> {
    pub fn new(
        stats: &'a CorpusStats,
        provider: &'a dyn EmbeddingProvider,
        lexicon: &'a Lexicon,
    ) -> Self {
        Self { stats, provider, lexicon }
    }

    /// Compute the full feature vector for one (CVE, commit) pair. Pure:
    /// the same inputs always produce the same vector.
    pub fn extract(&self, cve: &CveRecord, commit: &CommitRecord) -> F0Vector {
        let p = patterns();
        let mut sparse = IndexMap::new();
        let mut dense = IndexMap::new();

        // -------- code behavior --------
        let added: usize = commit.diffs.iter().map(|d| d.added_lines.len()).sum();
        let deleted: usize = commit.diffs.iter().map(|d| d.deleted_lines.len()).sum();
        // modified = paired add/delete lines, counted per file
        let modified: usize = commit
            .diffs
            .iter()
            .map(|d| d.added_lines.len().min(d.deleted_lines.len()))
            .sum();
        sparse.insert("code_added_num".into(), added as f64);
        sparse.insert("code_deleted_num".into(), deleted as f64);
        sparse.insert("code_modified_num".into(), modified as f64);

        let desc = extract_mentions(&cve.description);
        let diff = commit_mentions(commit);
        let same_paths = desc.paths.intersection(&diff.paths).count();
        let same_files = desc.files.intersection(&diff.files).count();
        let same_funcs = desc.functions.intersection(&diff.functions).count();
        sparse.insert("same_filepath_num".into(), same_paths as f64);
        sparse.insert("same_filepath_ratio".into(), ratio(same_paths, diff.paths.len()));
        sparse.insert(
            "unrelated_filepath_num".into(),
            diff.paths.difference(&desc.paths).count() as f64,
        );
        sparse.insert("same_file_num".into(), same_files as f64);
        sparse.insert("same_file_ratio".into(), ratio(same_files, diff.files.len()));
        sparse.insert(
            "unrelated_file_num".into(),
            diff.files.difference(&desc.files).count() as f64,
        );
        sparse.insert("same_function_num".into(), same_funcs as f64);
        sparse.insert("same_function_ratio".into(), ratio(same_funcs, diff.functions.len()));
        sparse.insert(
            "unrelated_function_num".into(),
            diff.functions.difference(&desc.functions).count() as f64,
        );

        // -------- commit message identifiers --------
        let message = &commit.message;
        sparse.insert("cve_num".into(), p.cve_id.find_iter(message).count() as f64);
        sparse.insert("bug_num".into(), p.bug_id.find_iter(message).count() as f64);
        sparse.insert("issue_num".into(), p.issue_id.find_iter(message).count() as f64);
        sparse.insert("url_num".into(), p.url.find_iter(message).count() as f64);
        let cve_match = p
            .cve_id
            .find_iter(message)
            .any(|m| m.as_str().eq_ignore_ascii_case(&cve.cve_id));
        sparse.insert("cve_match".into(), cve_match as u8 as f64);
        let desc_bugs: BTreeSet<String> = p
            .bug_id
            .captures_iter(&cve.description)
            .map(|c| c[1].to_string())
            .collect();
        let msg_bugs: BTreeSet<String> = p
            .bug_id
            .captures_iter(message)
            .map(|c| c[1].to_string())
            .collect();
        let bug_match = !desc_bugs.is_disjoint(&msg_bugs);
        sparse.insert("bug_match".into(), bug_match as u8 as f64);

        // -------- textual similarity --------
        let desc_tokens = without_stopwords(&tokenize_text(&cve.description));
        let msg_tokens = without_stopwords(&tokenize_text(message));
        let diff_text = commit.diff_text();
        let code_tokens = without_stopwords(&tokenize_text(&diff_text));
        let commit_tokens: Vec<String> =
            msg_tokens.iter().chain(code_tokens.iter()).cloned().collect();
        let cwe_tokens = without_stopwords(&tokenize_text(cve.cwe_name.as_deref().unwrap_or("")));

        let cwe_set: BTreeSet<&String> = cwe_tokens.iter().collect();
        let msg_set: BTreeSet<&String> = msg_tokens.iter().collect();
        let cwe_same = cwe_set.intersection(&msg_set).count();
        dense.insert("cwe_msg_same_num".into(), cwe_same as f64);
        dense.insert("cwe_msg_same_ratio".into(), ratio(cwe_same, cwe_set.len()));
        dense.insert(
            "tfidf_similarity".into(),
            tfidf_cosine(&desc_tokens, &commit_tokens, self.stats),
        );

        let msg_stats = shared_word_stats(&desc_tokens, &msg_tokens, self.stats);
        dense.insert("shared_msg_word_num".into(), msg_stats.num);
        dense.insert("shared_msg_word_ratio".into(), msg_stats.ratio.min(1.0));
        let code_stats = shared_word_stats(&desc_tokens, &code_tokens, self.stats);
        dense.insert("shared_code_word_num".into(), code_stats.num);
        dense.insert("shared_code_word_ratio".into(), code_stats.ratio.min(1.0));
        dense.insert("shared_msg_word_freq_max".into(), msg_stats.max);
        dense.insert("shared_msg_word_freq_sum".into(), msg_stats.sum);
        dense.insert("shared_msg_word_freq_avg".into(), msg_stats.avg);
        dense.insert("shared_msg_word_freq_var".into(), msg_stats.var);
        dense.insert("shared_code_word_freq_max".into(), code_stats.max);
        dense.insert("shared_code_word_freq_sum".into(), code_stats.sum);
        dense.insert("shared_code_word_freq_avg".into(), code_stats.avg);
        dense.insert("shared_code_word_freq_var".into(), code_stats.var);

        // -------- security relevance --------
        let commit_keywords = self.lexicon.matches(&commit_tokens);
        let cwe_owned: BTreeSet<String> = cwe_tokens.iter().cloned().collect();
        dense.insert(
            "vuln_type_relevance".into(),
            text::set_cosine(&cwe_owned, &commit_keywords),
        );

        // -------- temporal --------
        let interval = commit
            .commit_time
            .signed_duration_since(cve.published_time)
            .num_seconds() as f64;
        dense.insert("time_interval".into(), interval);

        let embed_commit_text = format!("{}\n{}", commit.message, diff_text);
        F0Vector {
            sparse,
            dense,
            text_embed_cve: self.provider.embed(&cve.description),
            text_embed_commit: self.provider.embed(&embed_commit_text),
        }
    }
}

/// Gather idf/frequency statistics from the documents of the given CVEs
/// and every commit in their repos. Call with training-fold CVEs only.
pub fn build_corpus_stats<'a>(corpus: &Corpus, cve_ids: impl Iterator<Item = &'a str>) -> CorpusStats {
    let mut stats = CorpusStats::default();
    let mut repos_seen = BTreeSet::new();
    for cve_id in cve_ids {
        if let Some(cve) = corpus.cves.get(cve_id) {
            stats.add_document(&tokenize_text(&cve.description));
        }
        if let Some(repo) = corpus.repo_of(cve_id) {
            repos_seen.insert(repo.to_string());
        }
    }
    for repo in repos_seen {
        for commit in corpus.commits[&repo].values() {
            let text = format!("{}\n{}", commit.message, commit.diff_text());
            stats.add_document(&tokenize_text(&text));
        }
    }
    stats
}

#[cfg(test)]
mod tests;
