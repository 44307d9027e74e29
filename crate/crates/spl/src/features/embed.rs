//! Text embedding providers. The default is a deterministic feature-hashing
//! embedder so the whole pipeline runs offline; an HTTP adapter with the
//! same contract can stand in for a hosted encoder.

use crate::error::{Error, Result};
use crate::features::text::tokenize_text;
use crate::util;
use std::sync::atomic::{AtomicU64, Ordering};

/// A deterministic map from text to a fixed-size real vector: the same
/// input text must always produce the same output.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// Feature-hashing embedder: each token lands in a signed bucket, the
/// result is L2-normalized. Deterministic across runs and platforms.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(64)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for token in tokenize_text(text) {
            let hash = util::stable_hash64(&[b"embed", token.as_bytes()]);
            let bucket = (hash % self.dim as u64) as usize;
            let sign = if (hash >> 63) == 0 { 1.0 } else { -1.0 };
            out[bucket] += sign;
        }
        let norm: f64 = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut out {
                *v /= norm;
            }
        }
        out
    }
}

/// HTTP adapter posting `{"model": ..., "input": text}` and expecting
/// `{"embedding": [...]}` back. Falls back to retrying transient failures.
pub struct HttpEmbedder {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    pub dim: usize,
    pub max_attempts: u32,
}

impl HttpEmbedder {
    pub fn from_env(dim: usize) -> Result<Self> {
        let endpoint = std::env::var("LLM_ENDPOINT")
            .map_err(|_| Error::Config("LLM_ENDPOINT not set for http embedder".into()))?;
        Ok(Self {
            endpoint,
            api_key: std::env::var("LLM_API_KEY").ok(),
            model: std::env::var("LLM_MODEL").unwrap_or_else(|_| "default-embed".into()),
            dim,
            max_attempts: 3,
        })
    }

    fn request(&self, text: &str) -> Result<Vec<f64>> {
        let mut last = None;
        for attempt in 0..self.max_attempts {
            if attempt > 0 {
                std::thread::sleep(std::time::Duration::from_millis(200 * attempt as u64));
            }
            let mut req = ureq::post(&self.endpoint);
            if let Some(key) = &self.api_key {
                req = req.set("Authorization", &format!("Bearer {key}"));
            }
            match req.send_json(serde_json::json!({ "model": self.model, "input": text })) {
                Ok(resp) => {
                    let body: serde_json::Value = resp
                        .into_json()
                        .map_err(|e| Error::Network(format!("embed response: {e}")))?;
                    let vec: Vec<f64> = body["embedding"]
                        .as_array()
                        .ok_or_else(|| Error::Network("embed response missing vector".into()))?
                        .iter()
                        .filter_map(|v| v.as_f64())
                        .collect();
                    if vec.len() != self.dim {
                        return Err(Error::ShapeMismatch {
                            expected: self.dim,
                            got: vec.len(),
                            context: "http embedding".into(),
                        });
                    }
                    return Ok(vec);
                }
                Err(e) => last = Some(Error::Network(format!("embed call: {e}"))),
            }
        }
        Err(last.unwrap_or_else(|| Error::Network("no embed attempts".into())))
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        // The provider contract is infallible; network problems degrade to
        // the zero vector after logging, so batch extraction keeps going.
        match self.request(text) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("embedding request failed, using zero vector: {e}");
                vec![0.0; self.dim]
            }
        }
    }
}

/// Counts embed calls; test helper for cache/coverage assertions.
pub struct CountingProvider<P> {
    pub inner: P,
    pub calls: AtomicU64,
}

impl<P: EmbeddingProvider> CountingProvider<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CountingProvider<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.embed(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_embedder_is_deterministic() {
        let provider = HashEmbedder::new(32);
        let a = provider.embed("fix buffer overflow in parser");
        let b = provider.embed("fix buffer overflow in parser");
        assert_eq!(a, b);
        assert_eq!(a.len(), 32);
    }

    #[test]
    fn hash_embedder_normalizes() {
        let provider = HashEmbedder::default();
        let v = provider.embed("some text with several tokens");
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert_eq!(provider.embed("").iter().map(|x| x.abs()).sum::<f64>(), 0.0);
    }

    #[test]
    fn different_texts_differ() {
        let provider = HashEmbedder::default();
        assert_ne!(provider.embed("alpha beta"), provider.embed("gamma delta"));
    }
}
