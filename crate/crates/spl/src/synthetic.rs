//! Deterministic synthetic corpus generator.
//!
//! Produces repositories of plausible commits plus CVEs whose primary
//! patch shares files, functions and vulnerability vocabulary with the
//! CVE description. Multi-patch CVEs additionally get a follow-up
//! co-patch that is deliberately content-dissimilar to the description
//! but shares its author with the primary patch within the candidate
//! window — the scenario the relationship graph exists to rescue.

use crate::corpus::{CommitRecord, Corpus, CveRecord, FileDiff, PatchLabel};
use crate::error::Result;
use crate::util;
use chrono::{DateTime, TimeZone, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::path::Path;

#[derive(Debug, Clone, Copy)]
pub struct SyntheticConfig {
    pub n_one_one: usize,
    pub n_one_n: usize,
    pub n_repos: usize,
    pub commits_per_repo: usize,
    /// gap between a patch and its follow-up, days. The range sits well
    /// inside the 56-day candidate window but far enough from the
    /// publication instant that timing alone cannot single the
    /// follow-up out.
    pub min_co_patch_gap_days: i64,
    pub max_co_patch_gap_days: i64,
    /// repository history length; short enough that many unrelated
    /// commits land near any given publication
    pub repo_span_days: i64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_one_one: 40,
            n_one_n: 20,
            n_repos: 20,
            commits_per_repo: 50,
            min_co_patch_gap_days: 5,
            max_co_patch_gap_days: 54,
            repo_span_days: 100,
            seed: 1,
        }
    }
}

const DAY: i64 = 86_400;

const VULN_TYPES: &[(&str, &str, &[&str])] = &[
    ("CWE-119", "Improper Restriction of Operations within the Bounds of a Memory Buffer", &["buffer", "overflow", "bounds"]),
    ("CWE-79", "Improper Neutralization of Input During Web Page Generation", &["xss", "script", "escaping"]),
    ("CWE-89", "SQL Injection", &["sql", "injection", "query"]),
    ("CWE-476", "NULL Pointer Dereference", &["null", "pointer", "dereference"]),
    ("CWE-416", "Use After Free", &["free", "memory", "dangling"]),
    ("CWE-22", "Improper Limitation of a Pathname to a Restricted Directory", &["traversal", "path", "sanitize"]),
    ("CWE-125", "Out-of-bounds Read", &["read", "bounds", "overflow"]),
    ("CWE-190", "Integer Overflow or Wraparound", &["integer", "overflow", "wraparound"]),
];

const DIRS: &[&str] = &["src", "lib", "net", "core", "util", "parser", "crypto", "io"];
const NOUNS: &[&str] = &[
    "alloc", "buffer", "request", "session", "token", "url", "image", "packet", "stream",
    "config", "header", "cache",
];
const EXTS: &[&str] = &["c", "h", "py", "js", "php", "go"];
const VERBS: &[&str] = &[
    "parse", "read", "write", "check", "validate", "decode", "encode", "handle", "init", "copy",
];
const IMPACTS: &[&str] = &[
    "a denial of service",
    "arbitrary code execution",
    "information disclosure",
    "memory corruption",
    "a crash",
];
const VECTORS: &[&str] = &[
    "a crafted file",
    "a malformed request",
    "a long header value",
    "an unexpected packet sequence",
    "specially crafted input",
];

fn ts(secs: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(secs, 0).unwrap()
}

fn pick<'a>(rng: &mut ChaCha12Rng, items: &'a [&'a str]) -> &'a str {
    items.choose(rng).expect("non-empty pool")
}

fn commit_id(repo: &str, index: usize, seed: u64) -> String {
    let hash = util::stable_hash64(&[
        b"synthetic-commit",
        repo.as_bytes(),
        &index.to_le_bytes(),
        &seed.to_le_bytes(),
    ]);
    format!("{hash:016x}")
}

fn code_lines(rng: &mut ChaCha12Rng, n: usize) -> Vec<String> {
    (0..n)
        .map(|_| {
            let noun = pick(rng, NOUNS);
            let verb = pick(rng, VERBS);
            match rng.random_range(0..4) {
                0 => format!("int rc = {verb}_{noun}(ctx, {});", rng.random_range(0..64)),
                1 => format!("if ({noun}->len > limit) return -1;"),
                2 => format!("{noun}_count += {};", rng.random_range(1..8)),
                _ => format!("memcpy(dst, {noun}, n);"),
            }
        })
        .collect()
}

fn background_commit(
    rng: &mut ChaCha12Rng,
    repo_id: &str,
    index: usize,
    seed: u64,
    time: i64,
    author: &str,
    committer: &str,
) -> CommitRecord {
    let noun = pick(rng, NOUNS);
    let verb = pick(rng, VERBS);
    let dir = pick(rng, DIRS);
    let ext = pick(rng, EXTS);
    let message = match rng.random_range(0..6) {
        0 => format!("refactor {noun} handling"),
        1 => format!("update docs for {noun} module"),
        2 => format!("add tests covering {verb}_{noun}"),
        3 => format!("improve performance of {verb}_{noun}"),
        4 => format!("cleanup {dir} internals"),
        _ => format!("bump {noun} dependency"),
    };
    let file = format!("{dir}/{noun}.{ext}");
    let n_added = rng.random_range(1..6);
    let added = code_lines(rng, n_added);
    let n_deleted = rng.random_range(0..3);
    let deleted = code_lines(rng, n_deleted);
    CommitRecord {
        commit_id: commit_id(repo_id, index, seed),
        repo_id: repo_id.to_string(),
        author: author.to_string(),
        author_time: ts(time),
        committer: committer.to_string(),
        commit_time: ts(time),
        message,
        parent_ids: vec![],
        diffs: vec![FileDiff {
            file_path: file,
            added_lines: added,
            deleted_lines: deleted,
            hunk_headers: vec![format!("@@ -10,6 +10,8 @@ static int {verb}_{noun}(void)")],
        }],
    }
}

/// Generate the corpus. Everything derives from `cfg.seed`.
pub fn generate(cfg: &SyntheticConfig) -> Corpus {
    let mut rng = ChaCha12Rng::seed_from_u64(util::stable_hash64(&[
        b"synthetic",
        &cfg.seed.to_le_bytes(),
    ]));

    // lay out repositories with commits spread over ~8 months
    let mut repo_commits: Vec<Vec<CommitRecord>> = Vec::with_capacity(cfg.n_repos);
    for ri in 0..cfg.n_repos {
        let repo_id = format!("org/proj{ri}");
        let authors: Vec<String> = (0..24).map(|a| format!("dev{a}@proj{ri}")).collect();
        let base = 1_550_000_000 + ri as i64 * 37 * DAY;
        let span = cfg.repo_span_days * DAY;
        let mut commits = Vec::with_capacity(cfg.commits_per_repo);
        for c in 0..cfg.commits_per_repo {
            let time = base + (c as i64 * span) / cfg.commits_per_repo as i64
                + rng.random_range(0..DAY);
            let author = authors[rng.random_range(0..authors.len())].clone();
            commits.push(background_commit(
                &mut rng, &repo_id, c, cfg.seed, time, &author, &author,
            ));
        }
        repo_commits.push(commits);
    }

    // carve CVEs into the repos round-robin; the first n_one_n get a
    // follow-up co-patch
    let mut cves = Vec::new();
    let mut labels = Vec::new();
    let total = cfg.n_one_one + cfg.n_one_n;
    let mut used: Vec<Vec<usize>> = vec![Vec::new(); cfg.n_repos];
    for n in 0..total {
        let multi = n < cfg.n_one_n;
        let ri = n % cfg.n_repos;
        let cve_id = format!("CVE-2021-{:04}", 1000 + n);
        let (cwe_id, cwe_name, vuln_words) = VULN_TYPES[rng.random_range(0..VULN_TYPES.len())];

        let pick_slot = |rng: &mut ChaCha12Rng, used: &mut Vec<usize>, lo: usize, hi: usize| loop {
            let slot = rng.random_range(lo..hi);
            if !used.contains(&slot) {
                used.push(slot);
                return slot;
            }
        };
        let n_slots = repo_commits[ri].len();
        // keep a tail of later commits so a follow-up always has room
        let reserve = (n_slots / 5).min(10);
        let a_hi = n_slots.saturating_sub(reserve).max(3);
        let a_slot = pick_slot(&mut rng, &mut used[ri], 2, a_hi);

        let dir = pick(&mut rng, DIRS);
        let noun = pick(&mut rng, NOUNS);
        let ext = pick(&mut rng, EXTS);
        let verb = pick(&mut rng, VERBS);
        let file = format!("{dir}/{noun}.{ext}");
        let function = format!("{verb}_{noun}");
        let impact = pick(&mut rng, IMPACTS);
        let vector = pick(&mut rng, VECTORS);

        // primary patch: mentions the file, the function and the
        // vulnerability vocabulary; sometimes the CVE id itself
        let mentions_id = rng.random::<f64>() < 0.35;
        let a_time = repo_commits[ri][a_slot].commit_time.timestamp();
        {
            let patch = &mut repo_commits[ri][a_slot];
            let id_part = if mentions_id {
                format!(" ({cve_id})")
            } else {
                String::new()
            };
            patch.message = format!(
                "fix {} {} in {}{}",
                vuln_words[0], vuln_words[1], function, id_part
            );
            patch.diffs = vec![FileDiff {
                file_path: file.clone(),
                added_lines: vec![
                    format!("if (!validate_{noun}(input)) return -1;"),
                    format!("len = {noun}->len;"),
                    format!("/* guard against {} {} */", vuln_words[0], vuln_words[1]),
                ],
                deleted_lines: vec![format!("len = raw_{noun}_len;")],
                hunk_headers: vec![format!("@@ -42,7 +42,9 @@ int {function}(ctx_t *ctx)")],
            }];
        }
        labels.push(PatchLabel {
            cve_id: cve_id.clone(),
            commit_id: repo_commits[ri][a_slot].commit_id.clone(),
        });

        // follow-up co-patch: same author and close in time, but its
        // content is drawn from the ordinary background generator, so
        // nothing in the commit itself marks it as a patch
        if multi {
            let b_slot = pick_slot(&mut rng, &mut used[ri], 2, n_slots.saturating_sub(2));
            let author = repo_commits[ri][a_slot].author.clone();
            let gap = rng.random_range(cfg.min_co_patch_gap_days..=cfg.max_co_patch_gap_days)
                * DAY
                + rng.random_range(0..DAY);
            let b = &mut repo_commits[ri][b_slot];
            b.author = author;
            b.author_time = ts(a_time + gap);
            b.commit_time = ts(a_time + gap);
            labels.push(PatchLabel {
                cve_id: cve_id.clone(),
                commit_id: b.commit_id.clone(),
            });
        }

        let description = format!(
            "A {} {} vulnerability in {} in org/proj{} allows remote attackers to cause {} via {}. \
             The {} function does not correctly {} the {} before use.",
            vuln_words[0], vuln_words[1], file, ri, impact, vector, function, vuln_words[2], noun
        );
        let published = a_time - rng.random_range(2..12) * DAY;
        cves.push(CveRecord {
            cve_id,
            description,
            published_time: ts(published),
            cwe_id: Some(cwe_id.to_string()),
            cwe_name: Some(cwe_name.to_string()),
            reference_urls: Vec::new(),
        });
    }

    // reference urls carry the labeling provenance (never used as features)
    let mut corpus = Corpus::default();
    for mut cve in cves {
        cve.reference_urls = labels
            .iter()
            .filter(|l| l.cve_id == cve.cve_id)
            .map(|l| format!("https://example.invalid/commit/{}", l.commit_id))
            .collect();
        corpus.add_cve(cve).expect("synthetic cve ids are unique");
    }
    for commits in repo_commits {
        for commit in commits {
            corpus.add_commit(commit).expect("synthetic commit ids are unique");
        }
    }
    for label in labels {
        corpus.add_label(label).expect("synthetic labels resolve");
    }
    corpus.validate().expect("synthetic corpus is well-formed");
    corpus
}

/// Generate and persist to `dir` as the three JSONL files.
pub fn generate_to_dir(cfg: &SyntheticConfig, dir: &Path) -> Result<Corpus> {
    let corpus = generate(cfg);
    crate::corpus::save_corpus(&corpus, dir)?;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::partition_by_cardinality;

    #[test]
    fn default_corpus_has_the_documented_shape() {
        let corpus = generate(&SyntheticConfig::default());
        assert_eq!(corpus.cves.len(), 60);
        let (one_one, one_n) = partition_by_cardinality(&corpus);
        assert_eq!(one_one.len(), 40);
        assert_eq!(one_n.len(), 20);
        assert_eq!(corpus.commits.len(), 12);
        assert_eq!(corpus.n_commits(), 600);
    }

    #[test]
    fn co_patches_share_author_within_the_window() {
        let corpus = generate(&SyntheticConfig::default());
        let (_, one_n) = partition_by_cardinality(&corpus);
        for cve_id in &one_n {
            let repo = corpus.repo_of(cve_id).unwrap().to_string();
            let patches = corpus.patches_of(cve_id);
            assert_eq!(patches.len(), 2);
            let a = corpus.commit(&repo, &patches[0]).unwrap();
            let b = corpus.commit(&repo, &patches[1]).unwrap();
            assert_eq!(a.author, b.author);
            let gap = (a.commit_time - b.commit_time).num_seconds().abs();
            assert!(gap <= 56 * DAY, "gap {} days", gap / DAY);
        }
    }

    #[test]
    fn co_patch_is_content_dissimilar_to_its_cve() {
        use crate::features::{tokenize_text, without_stopwords};
        let corpus = generate(&SyntheticConfig::default());
        let (_, one_n) = partition_by_cardinality(&corpus);
        for cve_id in &one_n {
            let repo = corpus.repo_of(cve_id).unwrap().to_string();
            let cve = &corpus.cves[cve_id];
            let desc: std::collections::BTreeSet<String> =
                without_stopwords(&tokenize_text(&cve.description))
                    .into_iter()
                    .collect();
            // the follow-up is the later of the two patches
            let patches = corpus.patches_of(cve_id);
            let mut commits: Vec<_> = patches
                .iter()
                .map(|id| corpus.commit(&repo, id).unwrap())
                .collect();
            commits.sort_by_key(|c| c.commit_time);
            let followup = commits[1];
            let msg: std::collections::BTreeSet<String> =
                without_stopwords(&tokenize_text(&followup.message))
                    .into_iter()
                    .collect();
            let shared: Vec<_> = desc.intersection(&msg).collect();
            assert!(
                shared.len() <= 2,
                "{cve_id}: follow-up shares too much with the description: {shared:?}"
            );
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SyntheticConfig::default();
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a.cves, b.cves);
        assert_eq!(a.commits, b.commits);
        assert_eq!(a.labels, b.labels);
        let c = generate(&SyntheticConfig { seed: 2, ..cfg });
        assert_ne!(a.commits, c.commits);
    }

    #[test]
    fn roundtrips_to_disk() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SyntheticConfig {
            n_one_one: 4,
            n_one_n: 2,
            n_repos: 3,
            commits_per_repo: 12,
            ..SyntheticConfig::default()
        };
        let written = generate_to_dir(&cfg, dir.path()).unwrap();
        let loaded = crate::corpus::load_corpus(dir.path()).unwrap();
        assert_eq!(written.labels, loaded.labels);
        assert_eq!(written.n_commits(), loaded.n_commits());
    }
}
