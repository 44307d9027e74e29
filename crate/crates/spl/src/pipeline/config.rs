//! Pipeline configuration, mirrored field-for-field by `pipeline.toml`.

use crate::error::{Error, Result};
use crate::model::{Activation, TrainConfig};
use crate::util;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Which feature families feed the final model. `F0` is always present;
/// the feedback bit requires `F0` and the graph requires the feedback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub f1: bool,
    pub f2: bool,
}

impl FeatureSet {
    pub const F0: FeatureSet = FeatureSet { f1: false, f2: false };
    pub const F0_F1: FeatureSet = FeatureSet { f1: true, f2: false };
    pub const F0_F1_F2: FeatureSet = FeatureSet { f1: true, f2: true };

    pub fn label(&self) -> &'static str {
        match (self.f1, self.f2) {
            (false, false) => "F0",
            (true, false) => "F0+F1",
            (true, true) => "F0+F1+F2",
            (false, true) => "F0+F2",
        }
    }

    pub fn from_names(names: &[String]) -> Result<Self> {
        let mut f0 = false;
        let mut set = FeatureSet { f1: false, f2: false };
        for name in names {
            match name.to_ascii_lowercase().as_str() {
                "f0" => f0 = true,
                "f1" => set.f1 = true,
                "f2" => set.f2 = true,
                other => return Err(Error::Config(format!("unknown feature family {other:?}"))),
            }
        }
        if !f0 {
            return Err(Error::Config("feature_set must include f0".into()));
        }
        if set.f2 && !set.f1 {
            return Err(Error::Config("f2 requires f1 (stage dependency)".into()));
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    /// "mock" or "http"
    pub kind: String,
    pub mock_fp: f64,
    pub mock_fn: f64,
    pub mock_seed: u64,
    /// abort before any call if the plan estimate exceeds this
    pub budget_usd: Option<f64>,
    pub request_reasoning: bool,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            kind: "mock".into(),
            mock_fp: 0.0,
            mock_fn: 0.0,
            mock_seed: 7,
            budget_usd: None,
            request_reasoning: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    /// "hash" or "http"
    pub kind: String,
    pub dim: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            kind: "hash".into(),
            dim: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_embed: usize,
    pub mlp_width: usize,
    pub mlp_layers: usize,
    pub gat_heads: usize,
    pub gat_layers: usize,
    pub activation: Activation,
    pub leaky_slope: f64,
    pub unfreeze_node_init: bool,
    /// cross-product hook: pairs of scalar feature names
    pub cross_features: Vec<(String, String)>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_embed: 256,
            mlp_width: 256,
            mlp_layers: 3,
            gat_heads: 4,
            gat_layers: 2,
            activation: Activation::Relu,
            leaky_slope: 0.2,
            unfreeze_node_init: false,
            cross_features: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkerConfig {
    pub features: usize,
    pub llm: usize,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        Self { features: 1, llm: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub n_folds: usize,
    pub k_f1: usize,
    pub k_f2: usize,
    pub window_days: i64,
    /// e.g. ["f0", "f1", "f2"]
    pub feature_set: Vec<String>,
    pub max_negatives: usize,
    pub n_bins: usize,
    pub max_k: usize,
    /// pooled metrics instead of macro averaging over folds
    pub pooled: bool,
    pub llm: LlmConfig,
    pub embedding: EmbeddingConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub workers: WorkerConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_folds: 5,
            k_f1: 100,
            k_f2: 8,
            window_days: 56,
            feature_set: vec!["f0".into(), "f1".into(), "f2".into()],
            max_negatives: 1500,
            n_bins: 10,
            max_k: 10,
            pooled: false,
            llm: LlmConfig::default(),
            embedding: EmbeddingConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            workers: WorkerConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn feature_set(&self) -> Result<FeatureSet> {
        FeatureSet::from_names(&self.feature_set)
    }

    pub fn validate(&self) -> Result<()> {
        self.feature_set()?;
        self.train.validate()?;
        if self.n_folds < 2 {
            return Err(Error::Config("n_folds must be >= 2".into()));
        }
        if self.window_days <= 0 {
            return Err(Error::Config("window_days must be positive".into()));
        }
        if self.n_bins == 0 || self.max_k == 0 {
            return Err(Error::Config("n_bins and max_k must be positive".into()));
        }
        match self.llm.kind.as_str() {
            "mock" | "http" => {}
            other => return Err(Error::Config(format!("unknown llm kind {other:?}"))),
        }
        match self.embedding.kind.as_str() {
            "hash" | "http" => {}
            other => return Err(Error::Config(format!("unknown embedding kind {other:?}"))),
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("pipeline.toml: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&util::read_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("serialize config: {e}")))
    }

    /// Digest of everything that affects artifacts; manifests key on it.
    pub fn digest(&self) -> Result<String> {
        Ok(util::sha256_hex(serde_json::to_string(self)?.as_bytes()))
    }
}
