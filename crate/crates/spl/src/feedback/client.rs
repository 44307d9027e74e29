//! LLM client implementations: a deterministic mock with configurable
//! error rates, an HTTP adapter, and a call-counting wrapper.

use super::{Prompt, PromptKind};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::util;
use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &Prompt) -> Result<String>;
    fn model_id(&self) -> String;
}

/// Ground truth the mock answers from: labeled (cve, commit) patch pairs
/// and unordered co-patch commit pairs of multi-patch CVEs.
#[derive(Debug, Clone, Default)]
pub struct MockOracle {
    patch_pairs: BTreeSet<(String, String)>,
    co_patch_pairs: BTreeSet<(String, String)>,
}

impl MockOracle {
    pub fn from_pairs(
        patch_pairs: impl IntoIterator<Item = (String, String)>,
        co_patch_pairs: impl IntoIterator<Item = (String, String)>,
    ) -> Self {
        Self {
            patch_pairs: patch_pairs.into_iter().collect(),
            co_patch_pairs: co_patch_pairs
                .into_iter()
                .map(|(a, b)| ordered(&a, &b))
                .collect(),
        }
    }

    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut patch_pairs = BTreeSet::new();
        let mut co_patch_pairs = BTreeSet::new();
        for (cve_id, patches) in corpus.labels_by_cve() {
            let patches: Vec<&String> = patches.iter().collect();
            for commit_id in &patches {
                patch_pairs.insert((cve_id.clone(), (*commit_id).clone()));
            }
            for i in 0..patches.len() {
                for j in i + 1..patches.len() {
                    co_patch_pairs.insert(ordered(patches[i], patches[j]));
                }
            }
        }
        Self {
            patch_pairs,
            co_patch_pairs,
        }
    }

    fn truth(&self, prompt: &Prompt) -> bool {
        match prompt.kind {
            PromptKind::F1 => {
                let cve = prompt.meta.cve_id.as_deref().unwrap_or_default();
                let commit = prompt.meta.commit_ids.first().map(String::as_str).unwrap_or_default();
                self.patch_pairs.contains(&(cve.to_string(), commit.to_string()))
            }
            PromptKind::F2 => {
                let a = prompt.meta.commit_ids.first().map(String::as_str).unwrap_or_default();
                let b = prompt.meta.commit_ids.get(1).map(String::as_str).unwrap_or_default();
                self.co_patch_pairs.contains(&ordered(a, b))
            }
        }
    }
}

fn ordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Deterministic fake analyst. Answers per the oracle, then flips the
/// verdict with probability `false_negative_rate` (for true pairs) or
/// `false_positive_rate` (for false pairs). The flip draw is a pure
/// function of (seed, prompt identity), so reruns and cache replays agree.
pub struct MockLlm {
    pub oracle: MockOracle,
    pub false_positive_rate: f64,
    pub false_negative_rate: f64,
    pub seed: u64,
}

impl MockLlm {
    pub fn exact(oracle: MockOracle) -> Self {
        Self {
            oracle,
            false_positive_rate: 0.0,
            false_negative_rate: 0.0,
            seed: 0,
        }
    }

    pub fn with_error_rates(oracle: MockOracle, fp: f64, fn_rate: f64, seed: u64) -> Self {
        Self {
            oracle,
            false_positive_rate: fp,
            false_negative_rate: fn_rate,
            seed,
        }
    }

    fn decide(&self, prompt: &Prompt) -> bool {
        let truth = self.oracle.truth(prompt);
        let flip_rate = if truth {
            self.false_negative_rate
        } else {
            self.false_positive_rate
        };
        if flip_rate <= 0.0 {
            return truth;
        }
        let kind = match prompt.kind {
            PromptKind::F1 => "f1",
            PromptKind::F2 => "f2",
        };
        let mut parts: Vec<&[u8]> = vec![b"mock", kind.as_bytes()];
        let seed_bytes = self.seed.to_le_bytes();
        parts.push(&seed_bytes);
        if let Some(cve) = &prompt.meta.cve_id {
            parts.push(cve.as_bytes());
        }
        for id in &prompt.meta.commit_ids {
            parts.push(id.as_bytes());
        }
        let draw = util::unit_f64(util::stable_hash64(&parts));
        if draw < flip_rate {
            !truth
        } else {
            truth
        }
    }
}

impl LlmClient for MockLlm {
    fn complete(&self, prompt: &Prompt) -> Result<String> {
        let answer = if self.decide(prompt) { "YES" } else { "NO" };
        Ok(format!(
            "Reviewing the provided material for a security-relevant connection.\n{answer}"
        ))
    }

    fn model_id(&self) -> String {
        format!(
            "mock-fp{}-fn{}-seed{}",
            self.false_positive_rate, self.false_negative_rate, self.seed
        )
    }
}

/// HTTP chat-completions adapter. Configuration comes from `LLM_ENDPOINT`,
/// `LLM_API_KEY` and `LLM_MODEL`; request and response bodies are logged
/// at debug level with the key redacted.
pub struct HttpLlm {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    pub max_attempts: u32,
    pub base_backoff: std::time::Duration,
}

impl HttpLlm {
    pub fn from_env() -> Result<Self> {
        let endpoint = std::env::var("LLM_ENDPOINT")
            .map_err(|_| Error::Config("LLM_ENDPOINT must be set for --llm http".into()))?;
        Ok(Self {
            endpoint,
            api_key: std::env::var("LLM_API_KEY").ok(),
            model: std::env::var("LLM_MODEL").unwrap_or_else(|_| "gpt-3.5-turbo".into()),
            max_attempts: 4,
            base_backoff: std::time::Duration::from_millis(500),
        })
    }
}

impl LlmClient for HttpLlm {
    fn complete(&self, prompt: &Prompt) -> Result<String> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": prompt.role_preamble},
                {"role": "user", "content": format!(
                    "{}\n\n{}\n{}",
                    prompt.content_block, prompt.task_instruction, prompt.output_instruction
                )},
            ],
        });
        log::debug!(
            "llm request to {} (model {}, ~{} tokens, auth {})",
            self.endpoint,
            self.model,
            prompt.token_estimate,
            if self.api_key.is_some() { "[redacted]" } else { "none" }
        );
        let mut last = None;
        for attempt in 0..self.max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.base_backoff * 2u32.pow(attempt - 1));
            }
            let mut req = ureq::post(&self.endpoint);
            if let Some(key) = &self.api_key {
                req = req.set("Authorization", &format!("Bearer {key}"));
            }
            match req.send_json(body.clone()) {
                Ok(resp) => {
                    let json: serde_json::Value = resp
                        .into_json()
                        .map_err(|e| Error::Client(format!("bad response body: {e}")))?;
                    let content = json["choices"][0]["message"]["content"]
                        .as_str()
                        .ok_or_else(|| Error::Client("response missing content".into()))?
                        .to_string();
                    log::debug!("llm response ({} bytes)", content.len());
                    return Ok(content);
                }
                Err(ureq::Error::Status(429, _)) => {
                    last = Some(Error::RateLimited(self.endpoint.clone()));
                }
                Err(e) => last = Some(Error::Client(format!("{e}"))),
            }
        }
        Err(last.unwrap_or_else(|| Error::Client("no attempts".into())))
    }

    fn model_id(&self) -> String {
        self.model.clone()
    }
}

/// Wrapper that counts completions; used to verify `--dry-run` makes zero
/// calls and that caching suppresses repeats.
pub struct CountingLlm {
    pub inner: Arc<dyn LlmClient>,
    pub calls: AtomicU64,
}

impl CountingLlm {
    pub fn new(inner: Arc<dyn LlmClient>) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl LlmClient for CountingLlm {
    fn complete(&self, prompt: &Prompt) -> Result<String> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.complete(prompt)
    }

    fn model_id(&self) -> String {
        self.inner.model_id()
    }
}
