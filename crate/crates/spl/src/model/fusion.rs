//! Fusion gate, linear classifier and focal loss.
//!
//! The gate mixes the numerical and graph embeddings with a two-way
//! softmax over the gate logits `w_E . E_N` and `w_G . E_G`, computed in
//! log-space so equal logits blend exactly half-and-half:
//!
//! `E = E_N * softmax_N + E_G * softmax_G`

use super::sigmoid;
use ndarray::Array1;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub w_numeric: Array1<f64>,
    pub w_graph: Array1<f64>,
}

impl FusionParams {
    pub fn init(d_embed: usize, rng: &mut impl Rng) -> Self {
        let bound = (3.0 / d_embed as f64).sqrt();
        Self {
            w_numeric: Array1::from_shape_fn(d_embed, |_| rng.random_range(-bound..bound)),
            w_graph: Array1::from_shape_fn(d_embed, |_| rng.random_range(-bound..bound)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w_numeric: Array1::zeros(self.w_numeric.raw_dim()),
            w_graph: Array1::zeros(self.w_graph.raw_dim()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub w: Array1<f64>,
    pub b: f64,
}

impl ClassifierParams {
    pub fn init(d_embed: usize) -> Self {
        // zero weights start every score at 0.5
        Self {
            w: Array1::zeros(d_embed),
            b: 0.0,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w: Array1::zeros(self.w.raw_dim()),
            b: 0.0,
        }
    }
}

/// Saved state of one pair's fusion + classification.
#[derive(Debug, Clone)]
pub struct FusionCache {
    pub coef_numeric: f64,
    pub coef_graph: f64,
    pub fused: Array1<f64>,
    pub score: f64,
}

/// Blend the two embeddings and score the pair.
pub fn fuse(
    fusion: &FusionParams,
    classifier: &ClassifierParams,
    e_n: &Array1<f64>,
    e_g: &Array1<f64>,
) -> FusionCache {
    let logit_n = fusion.w_numeric.dot(e_n);
    let logit_g = fusion.w_graph.dot(e_g);
    // log-space softmax over the two gate logits
    let max = logit_n.max(logit_g);
    let exp_n = (logit_n - max).exp();
    let exp_g = (logit_g - max).exp();
    let denom = exp_n + exp_g;
    let coef_numeric = exp_n / denom;
    let coef_graph = exp_g / denom;
    let fused = e_n * coef_numeric + e_g * coef_graph;
    let score = sigmoid(classifier.w.dot(&fused) + classifier.b);
    FusionCache {
        coef_numeric,
        coef_graph,
        fused,
        score,
    }
}

const SCORE_EPS: f64 = 1e-7;

/// Focal loss: `L = -w_c (1 - p_t)^gamma ln(p_t)` with `p_t = score` for
/// positives and `1 - score` for negatives; `w_c` is 1 for positives and
/// `alpha` for negatives (the class-balance weight down-weights the
/// overwhelming negative class). The score is clamped away from 0 and 1.
pub fn focal_loss(score: f64, label: bool, alpha: f64, gamma: f64) -> f64 {
    let pt = if label { score } else { 1.0 - score };
    let pt = pt.clamp(SCORE_EPS, 1.0 - SCORE_EPS);
    let class_weight = if label { 1.0 } else { alpha };
    -class_weight * (1.0 - pt).powf(gamma) * pt.ln()
}

/// dL/dscore for the focal loss.
pub fn focal_loss_grad(score: f64, label: bool, alpha: f64, gamma: f64) -> f64 {
    let pt_raw = if label { score } else { 1.0 - score };
    let pt = pt_raw.clamp(SCORE_EPS, 1.0 - SCORE_EPS);
    let class_weight = if label { 1.0 } else { alpha };
    let one_minus = 1.0 - pt;
    let d_pt = class_weight * (gamma * one_minus.powf(gamma - 1.0) * pt.ln() - one_minus.powf(gamma) / pt);
    if label {
        d_pt
    } else {
        -d_pt
    }
}

/// Gradients flowing out of one pair's fusion + classifier given
/// `d_score = dL/dscore`.
pub struct FusionBackward {
    pub d_e_n: Array1<f64>,
    pub d_e_g: Array1<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn fuse_backward(
    fusion: &FusionParams,
    classifier: &ClassifierParams,
    e_n: &Array1<f64>,
    e_g: &Array1<f64>,
    cache: &FusionCache,
    d_score: f64,
    fusion_grads: &mut FusionParams,
    classifier_grads: &mut ClassifierParams,
) -> FusionBackward {
    // classifier sigmoid
    let d_z = d_score * cache.score * (1.0 - cache.score);
    classifier_grads.w.scaled_add(d_z, &cache.fused);
    classifier_grads.b += d_z;
    let d_fused = classifier.w.mapv(|w| w * d_z);

    // gate: d(coef)/d(logit) through the two-way softmax
    let d_logit_n = (d_fused.dot(e_n) - d_fused.dot(e_g)) * cache.coef_numeric * cache.coef_graph;
    let d_logit_g = -d_logit_n;
    fusion_grads.w_numeric.scaled_add(d_logit_n, e_n);
    fusion_grads.w_graph.scaled_add(d_logit_g, e_g);

    let mut d_e_n = d_fused.mapv(|v| v * cache.coef_numeric);
    d_e_n.scaled_add(d_logit_n, &fusion.w_numeric);
    let mut d_e_g = d_fused.mapv(|v| v * cache.coef_graph);
    d_e_g.scaled_add(d_logit_g, &fusion.w_graph);
    FusionBackward { d_e_n, d_e_g }
}
