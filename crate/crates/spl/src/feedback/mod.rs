//! LLM relevance feedback: prompt construction under a hard token budget,
//! verdict parsing, response caching, per-CVE feedback collection and cost
//! accounting.
//!
//! Two prompt kinds exist. An `F1` prompt asks whether one commit patches
//! one CVE; an `F2` prompt asks whether two commits collaboratively
//! address the same vulnerability. Either way the model is instructed to
//! end with a single line saying YES, NO or UNKNOWN, and UNKNOWN is
//! treated as NO downstream.

pub mod cache;
pub mod client;
pub mod f1;

pub use cache::{CachedClient, VerdictCache};
pub use client::{CountingLlm, HttpLlm, LlmClient, MockLlm, MockOracle};
pub use f1::{collect_f1, F1Assignment, F1Entry};

use crate::corpus::{CommitRecord, CveRecord};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Hard per-prompt token ceiling.
pub const MAX_PROMPT_TOKENS: usize = 4097;

/// Cost model constants: USD per query kind and mean seconds per query.
pub const F1_QUERY_USD: f64 = 0.002;
pub const F2_QUERY_USD: f64 = 0.003;
pub const QUERY_SECONDS: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PromptKind {
    F1,
    F2,
}

/// Structured identifiers carried alongside the prompt text, used by the
/// deterministic mock client and the audit trail.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PromptMeta {
    pub cve_id: Option<String>,
    pub commit_ids: Vec<String>,
}

/// A four-part prompt: role preamble, content block, task instruction and
/// output instruction. `token_estimate` covers the rendered whole and
/// never exceeds [`MAX_PROMPT_TOKENS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub kind: PromptKind,
    pub role_preamble: String,
    pub content_block: String,
    pub task_instruction: String,
    pub output_instruction: String,
    pub token_estimate: usize,
    pub meta: PromptMeta,
}

impl Prompt {
    /// The exact text sent to the model.
    pub fn render(&self) -> String {
        format!(
            "{}\n\n{}\n\n{}\n{}",
            self.role_preamble, self.content_block, self.task_instruction, self.output_instruction
        )
    }

    pub fn cache_key(&self) -> String {
        crate::util::sha256_hex(self.render().as_bytes())
    }
}

/// Approximate token accounting: 1 token per 0.75 whitespace-separated
/// words. A vendor tokenizer can replace this through the HTTP adapter,
/// but budget enforcement never depends on one.
pub fn estimate_tokens(text: &str) -> usize {
    let words = text.split_whitespace().count();
    (words * 4).div_ceil(3)
}

/// Keep the first `max_tokens` tokens of `text`, dropping the tail.
pub fn take_prefix_tokens(text: &str, max_tokens: usize) -> String {
    let allowed_words = max_tokens * 3 / 4;
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.len() <= allowed_words {
        text.to_string()
    } else {
        words[..allowed_words].join(" ")
    }
}

/// Fit (description, diff) into `max_tokens` minus the `reserved` scaffold
/// tokens. The description is kept whole whenever it fits; the diff is
/// truncated from the tail. If the scaffold and description alone exceed
/// the budget, the description itself is tail-truncated and the diff
/// dropped.
pub fn truncate_to_budget(
    description: &str,
    diff: &str,
    max_tokens: usize,
    reserved: usize,
) -> (String, String) {
    let available = max_tokens.saturating_sub(reserved);
    let desc_tokens = estimate_tokens(description);
    if desc_tokens + estimate_tokens(diff) <= available {
        return (description.to_string(), diff.to_string());
    }
    if desc_tokens <= available {
        let diff_budget = available - desc_tokens;
        return (description.to_string(), take_prefix_tokens(diff, diff_budget));
    }
    log::warn!(
        "prompt scaffold ({reserved}) plus description ({desc_tokens}) exceed budget {max_tokens}; truncating description"
    );
    (take_prefix_tokens(description, available), String::new())
}

const ROLE_PREAMBLE: &str = "You are an experienced software security analyst. You review vulnerability reports and source code commits for open source projects.";

const OUTPUT_INSTRUCTION: &str = "Conclude your response with a single line containing exactly one word: YES, NO, or UNKNOWN.";

const OUTPUT_INSTRUCTION_WITH_REASONING: &str = "Briefly explain your reasoning. Then conclude your response with a single line containing exactly one word: YES, NO, or UNKNOWN.";

/// Prompt-template knobs. `request_reasoning` asks the model to explain
/// itself before the verdict line; off by default.
#[derive(Debug, Clone, Copy, Default)]
pub struct PromptOptions {
    pub request_reasoning: bool,
}

fn output_instruction(opts: PromptOptions) -> &'static str {
    if opts.request_reasoning {
        OUTPUT_INSTRUCTION_WITH_REASONING
    } else {
        OUTPUT_INSTRUCTION
    }
}

/// Build the "does this commit patch this CVE?" prompt. The commit diff is
/// truncated as needed; the CVE description and commit message are
/// retained in full whenever they fit.
pub fn build_f1_prompt(cve: &CveRecord, commit: &CommitRecord, opts: PromptOptions) -> Prompt {
    let task = "Determine whether the commit above is a security patch for the CVE above.";
    let description = format!(
        "CVE {}\nDescription: {}\n\nCommit {}\nMessage: {}",
        cve.cve_id, cve.description, commit.commit_id, commit.message
    );
    let scaffold = format!("{ROLE_PREAMBLE}\n\nDiff:\n\n{task}\n{}", output_instruction(opts));
    let reserved = estimate_tokens(&scaffold);
    let (description, diff) =
        truncate_to_budget(&description, &commit.diff_text(), MAX_PROMPT_TOKENS, reserved);
    let content_block = format!("{description}\nDiff:\n{diff}");
    let prompt = Prompt {
        kind: PromptKind::F1,
        role_preamble: ROLE_PREAMBLE.to_string(),
        content_block,
        task_instruction: task.to_string(),
        output_instruction: output_instruction(opts).to_string(),
        token_estimate: 0,
        meta: PromptMeta {
            cve_id: Some(cve.cve_id.clone()),
            commit_ids: vec![commit.commit_id.clone()],
        },
    };
    finish(prompt)
}

/// Build the "do these two commits collaboratively address the same
/// vulnerability?" prompt. The budget is split evenly between the two
/// commits, and the pair is canonically ordered so (a, b) and (b, a)
/// produce the same prompt text and cache key.
pub fn build_f2_prompt(
    a: &CommitRecord,
    b: &CommitRecord,
    opts: PromptOptions,
) -> Result<Prompt> {
    if a.commit_id == b.commit_id {
        return Err(Error::SameCommit(a.commit_id.clone()));
    }
    let (first, second) = if a.commit_id <= b.commit_id { (a, b) } else { (b, a) };
    let task =
        "Determine whether the two commits above collaboratively address the same vulnerability.";
    let scaffold = format!(
        "{ROLE_PREAMBLE}\n\nFirst commit {}\nMessage: {}\nDiff:\n\nSecond commit {}\nMessage: {}\nDiff:\n\n{task}\n{}",
        first.commit_id,
        first.message,
        second.commit_id,
        second.message,
        output_instruction(opts)
    );
    let reserved = estimate_tokens(&scaffold);
    let per_commit = MAX_PROMPT_TOKENS.saturating_sub(reserved) / 2;
    let diff_a = take_prefix_tokens(&first.diff_text(), per_commit);
    let diff_b = take_prefix_tokens(&second.diff_text(), per_commit);
    let content_block = format!(
        "First commit {}\nMessage: {}\nDiff:\n{}\n\nSecond commit {}\nMessage: {}\nDiff:\n{}",
        first.commit_id, first.message, diff_a, second.commit_id, second.message, diff_b
    );
    let prompt = Prompt {
        kind: PromptKind::F2,
        role_preamble: ROLE_PREAMBLE.to_string(),
        content_block,
        task_instruction: task.to_string(),
        output_instruction: output_instruction(opts).to_string(),
        token_estimate: 0,
        meta: PromptMeta {
            cve_id: None,
            commit_ids: vec![first.commit_id.clone(), second.commit_id.clone()],
        },
    };
    Ok(finish(prompt))
}

fn finish(mut prompt: Prompt) -> Prompt {
    prompt.token_estimate = estimate_tokens(&prompt.render());
    debug_assert!(
        prompt.token_estimate <= MAX_PROMPT_TOKENS,
        "prompt budget exceeded: {}",
        prompt.token_estimate
    );
    prompt
}

/// The model's parsed determination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictValue {
    Yes,
    No,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub value: VerdictValue,
    pub raw_response: String,
    pub parse_ok: bool,
}

impl Verdict {
    /// The downstream feature bit; UNKNOWN maps to NO.
    pub fn bit(&self) -> bool {
        self.value == VerdictValue::Yes
    }
}

/// Scan the last non-empty line for a standalone YES/NO/UNKNOWN
/// (case-insensitive, surrounding punctuation ignored). Total: anything
/// unparseable becomes UNKNOWN with `parse_ok = false`.
pub fn parse_verdict(raw: &str) -> Verdict {
    let value = raw
        .lines()
        .rev()
        .map(str::trim)
        .find(|line| !line.is_empty())
        .and_then(|line| {
            let token = line.trim_matches(|c: char| !c.is_ascii_alphanumeric());
            if token.eq_ignore_ascii_case("yes") {
                Some(VerdictValue::Yes)
            } else if token.eq_ignore_ascii_case("no") {
                Some(VerdictValue::No)
            } else if token.eq_ignore_ascii_case("unknown") {
                Some(VerdictValue::Unknown)
            } else {
                None
            }
        });
    match value {
        Some(v) => Verdict {
            value: v,
            raw_response: raw.to_string(),
            parse_ok: true,
        },
        None => Verdict {
            value: VerdictValue::Unknown,
            raw_response: raw.to_string(),
            parse_ok: false,
        },
    }
}

/// Projected spend and serial wall-clock for a feedback plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub n_f1_queries: usize,
    pub n_f2_queries: usize,
    pub usd: f64,
    pub est_wallclock_seconds: f64,
}

pub fn estimate_cost(n_f1_queries: usize, n_f2_queries: usize) -> CostEstimate {
    CostEstimate {
        n_f1_queries,
        n_f2_queries,
        usd: F1_QUERY_USD * n_f1_queries as f64 + F2_QUERY_USD * n_f2_queries as f64,
        est_wallclock_seconds: QUERY_SECONDS * (n_f1_queries + n_f2_queries) as f64,
    }
}

#[cfg(test)]
mod tests;
