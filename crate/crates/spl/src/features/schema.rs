//! Model-input layout: how a feature vector (plus the feedback bit) turns
//! into the wide path's one-hot block and the deep path's dense block.
//!
//! Every scalar feature is discretized with the training-fold binning spec
//! and one-hot encoded for the wide path (flags use width 2, everything
//! else `n_bins`). Dense scalars additionally enter the deep path raw,
//! followed by the two text embeddings. An optional cross-product hook
//! appends the one-hot of a feature-pair's joint bin; no crosses ship by
//! default.

use crate::error::{Error, Result};
use crate::features::{
    binning::BinningSpec, dense_feature_names, sparse_feature_names, F0Vector, FeatureKind,
    FEATURES,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSchema {
    pub n_bins: usize,
    pub include_f1: bool,
    pub embed_dim: usize,
    /// cross-product hook: pairs of scalar feature names
    #[serde(default)]
    pub crosses: Vec<(String, String)>,
}

impl EncoderSchema {
    pub fn new(n_bins: usize, include_f1: bool, embed_dim: usize) -> Self {
        Self {
            n_bins,
            include_f1,
            embed_dim,
            crosses: Vec::new(),
        }
    }

    fn width_of(&self, name: &str) -> Result<usize> {
        let def = FEATURES
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| Error::Config(format!("unknown feature {name} in schema")))?;
        Ok(match def.kind {
            FeatureKind::Flag => 2,
            _ => self.n_bins,
        })
    }

    /// Width of the wide-path input vector.
    pub fn sparse_dim(&self) -> usize {
        let mut dim = 0;
        for def in FEATURES {
            dim += match def.kind {
                FeatureKind::Flag => 2,
                _ => self.n_bins,
            };
        }
        if self.include_f1 {
            dim += 2;
        }
        for (a, b) in &self.crosses {
            dim += self.width_of(a).unwrap_or(self.n_bins) * self.width_of(b).unwrap_or(self.n_bins);
        }
        dim
    }

    /// Width of the deep-path input vector.
    pub fn dense_dim(&self) -> usize {
        dense_feature_names().len() + 2 * self.embed_dim
    }

    fn slot(&self, f0: &F0Vector, name: &str, bins: &BinningSpec) -> (usize, usize) {
        let def = FEATURES.iter().find(|f| f.name == name).expect("known feature");
        let value = f0.get(name);
        match def.kind {
            FeatureKind::Flag => (if value != 0.0 { 1 } else { 0 }, 2),
            _ => (bins.bin(name, value), self.n_bins),
        }
    }

    /// Encode one pair into (wide one-hots, deep raw values).
    pub fn encode(&self, f0: &F0Vector, f1_bit: bool, bins: &BinningSpec) -> (Vec<f64>, Vec<f64>) {
        let mut sparse = Vec::with_capacity(self.sparse_dim());
        for def in FEATURES {
            let (idx, width) = self.slot(f0, def.name, bins);
            let mut block = vec![0.0; width];
            block[idx.min(width - 1)] = 1.0;
            sparse.extend(block);
        }
        if self.include_f1 {
            sparse.extend(if f1_bit { [0.0, 1.0] } else { [1.0, 0.0] });
        }
        for (a, b) in &self.crosses {
            let (ia, _wa) = self.slot(f0, a, bins);
            let (ib, wb) = self.slot(f0, b, bins);
            let width = self.width_of(a).unwrap_or(self.n_bins) * wb;
            let mut block = vec![0.0; width];
            block[(ia * wb + ib).min(width - 1)] = 1.0;
            sparse.extend(block);
        }

        let mut dense = Vec::with_capacity(self.dense_dim());
        for name in dense_feature_names() {
            dense.push(f0.get(name));
        }
        dense.extend_from_slice(&f0.text_embed_cve);
        dense.extend_from_slice(&f0.text_embed_commit);
        (sparse, dense)
    }

    /// Affine input scaling for the deep path derived from the binning
    /// spec: dense scalars map to roughly [0, 1]; embedding coordinates
    /// pass through unchanged. Returned as (offset, scale) so the encoder
    /// computes `(x - offset) * scale`.
    pub fn dense_scale(&self, bins: &BinningSpec) -> (Vec<f64>, Vec<f64>) {
        let mut offset = Vec::with_capacity(self.dense_dim());
        let mut scale = Vec::with_capacity(self.dense_dim());
        for name in dense_feature_names() {
            match bins.entries.get(name) {
                Some(e) if e.x_max > e.x_min => {
                    offset.push(e.x_min);
                    scale.push(1.0 / (e.x_max - e.x_min));
                }
                _ => {
                    offset.push(0.0);
                    scale.push(1.0);
                }
            }
        }
        offset.extend(std::iter::repeat(0.0).take(2 * self.embed_dim));
        scale.extend(std::iter::repeat(1.0).take(2 * self.embed_dim));
        (offset, scale)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bins == 0 {
            return Err(Error::Config("n_bins must be positive".into()));
        }
        let sparse_names = sparse_feature_names();
        let dense_names = dense_feature_names();
        for (a, b) in &self.crosses {
            for name in [a, b] {
                if !sparse_names.contains(&name.as_str()) && !dense_names.contains(&name.as_str()) {
                    return Err(Error::Config(format!("cross references unknown feature {name}")));
                }
            }
        }
        Ok(())
    }
}
