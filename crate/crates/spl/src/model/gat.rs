//! Graph attention encoder. Per layer and head, node i's embedding is
//! refined by a softmax-weighted average of its neighbors' projected
//! features (self-loop included):
//!
//! `e_ij = LeakyReLU(w_e . [W h_i || W h_j])`,
//! `alpha_ij = softmax_j(e_ij)`, `h_i' = sigma(sum_j alpha_ij W h_j)`.
//!
//! Head outputs are concatenated after the first layer and averaged at
//! the final layer. Commits absent from the graph receive a zero
//! embedding downstream.

use super::{sigmoid, ModelDims};
use crate::graph::CommitGraph;
use ndarray::{Array1, Array2};
use rand::Rng;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct GatHead {
    /// (out, in) shared projection
    pub w: Array2<f64>,
    /// (2 * out) attention vector
    pub a: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combine {
    Concat,
    Average,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatLayer {
    pub heads: Vec<GatHead>,
    pub combine: Combine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatParams {
    pub layers: Vec<GatLayer>,
    pub leaky_slope: f64,
}

impl GatParams {
    /// Two layers: heads concatenated to `d_embed` after layer one, then
    /// averaged `d_embed`-wide outputs at layer two.
    pub fn init(dims: &ModelDims, leaky_slope: f64, rng: &mut impl Rng) -> Self {
        let head_out_1 = dims.d_embed / dims.gat_heads;
        let make_head = |rng: &mut dyn rand::RngCore, out: usize, inp: usize| {
            let bound = (6.0 / (out + inp) as f64).sqrt();
            let a_bound = (6.0 / (2 * out + 1) as f64).sqrt();
            GatHead {
                w: Array2::from_shape_fn((out, inp), |_| rng.random_range(-bound..bound)),
                a: Array1::from_shape_fn(2 * out, |_| rng.random_range(-a_bound..a_bound)),
            }
        };
        let layer1 = GatLayer {
            heads: (0..dims.gat_heads)
                .map(|_| make_head(rng, head_out_1, dims.node_dim))
                .collect(),
            combine: Combine::Concat,
        };
        let layer2 = GatLayer {
            heads: (0..dims.gat_heads)
                .map(|_| make_head(rng, dims.d_embed, dims.d_embed))
                .collect(),
            combine: Combine::Average,
        };
        Self {
            layers: vec![layer1, layer2],
            leaky_slope,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|layer| GatLayer {
                    heads: layer
                        .heads
                        .iter()
                        .map(|h| GatHead {
                            w: Array2::zeros(h.w.raw_dim()),
                            a: Array1::zeros(h.a.raw_dim()),
                        })
                        .collect(),
                    combine: layer.combine,
                })
                .collect(),
            leaky_slope: self.leaky_slope,
        }
    }
}

/// A graph prepared for the encoder: dense node features and sorted
/// neighbor lists (without self; the encoder adds the self-loop).
#[derive(Debug, Clone, PartialEq)]
pub struct GraphTensors {
    pub repo_id: String,
    pub feats: Array2<f64>,
    pub adjacency: Vec<Vec<usize>>,
    pub node_index: BTreeMap<String, usize>,
}

impl GraphTensors {
    /// Build from an endorsed commit graph, projecting or padding the
    /// stored embeddings to `node_dim` columns.
    pub fn from_graph(graph: &CommitGraph, node_dim: usize) -> crate::Result<Self> {
        let node_index: BTreeMap<String, usize> = graph
            .node_init
            .keys()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let n = node_index.len();
        let mut feats = Array2::zeros((n, node_dim));
        for (id, &i) in &node_index {
            let embed = &graph.node_init[id];
            if embed.is_empty() {
                return Err(crate::Error::MissingNodeInit(id.clone()));
            }
            for d in 0..node_dim.min(embed.len()) {
                feats[(i, d)] = embed[d];
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        for edge in graph.edges.iter().filter(|e| e.weight == 1) {
            let (u, v) = (node_index[&edge.u], node_index[&edge.v]);
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            repo_id: graph.repo_id.clone(),
            feats,
            adjacency,
            node_index,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }
}

/// Per-head cached state for backward.
pub struct HeadCache {
    /// (n, out) projected features
    pub projected: Array2<f64>,
    /// raw attention inputs per node, aligned with `neighbors`
    pub pre_leaky: Vec<Vec<f64>>,
    /// softmax coefficients per node, aligned with `neighbors`
    pub alpha: Vec<Vec<f64>>,
    /// (n, out) pre-activation aggregate
    pub aggregate: Array2<f64>,
}

pub struct LayerCache {
    pub input: Array2<f64>,
    pub heads: Vec<HeadCache>,
    /// Average combine: mean of head aggregates (n, out)
    pub mean_aggregate: Option<Array2<f64>>,
    pub output: Array2<f64>,
}

pub struct GatCache {
    pub layers: Vec<LayerCache>,
    /// neighbor lists with the self-loop at position 0
    pub neighbors: Vec<Vec<usize>>,
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn leaky_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

impl GatParams {
    /// Forward over one graph; `feats` overrides the stored node features
    /// (used when node embeddings are being fine-tuned).
    pub fn forward(&self, graph: &GraphTensors, feats: &Array2<f64>) -> GatCache {
        let n = graph.n_nodes();
        let neighbors: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut list = Vec::with_capacity(graph.adjacency[i].len() + 1);
                list.push(i);
                list.extend(graph.adjacency[i].iter().copied());
                list
            })
            .collect();

        let mut layers = Vec::with_capacity(self.layers.len());
        let mut h = feats.clone();
        for layer in &self.layers {
            let mut head_caches = Vec::with_capacity(layer.heads.len());
            for head in &layer.heads {
                let projected = h.dot(&head.w.t());
                let out_dim = projected.ncols();
                let (a_self, a_nbr) = head.a.view().split_at(ndarray::Axis(0), out_dim);
                let mut pre_leaky = Vec::with_capacity(n);
                let mut alpha = Vec::with_capacity(n);
                let mut aggregate = Array2::zeros((n, out_dim));
                for i in 0..n {
                    let self_term = projected.row(i).dot(&a_self);
                    let raw: Vec<f64> = neighbors[i]
                        .iter()
                        .map(|&j| self_term + projected.row(j).dot(&a_nbr))
                        .collect();
                    let scores: Vec<f64> =
                        raw.iter().map(|&z| leaky(z, self.leaky_slope)).collect();
                    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
                    let denom: f64 = exps.iter().sum();
                    let coefs: Vec<f64> = exps.iter().map(|&e| e / denom).collect();
                    for (&j, &coef) in neighbors[i].iter().zip(&coefs) {
                        let mut row = aggregate.row_mut(i);
                        row.scaled_add(coef, &projected.row(j));
                    }
                    pre_leaky.push(raw);
                    alpha.push(coefs);
                }
                head_caches.push(HeadCache {
                    projected,
                    pre_leaky,
                    alpha,
                    aggregate,
                });
            }
            let (output, mean_aggregate) = match layer.combine {
                Combine::Concat => {
                    let total: usize = head_caches.iter().map(|c| c.aggregate.ncols()).sum();
                    let mut out = Array2::zeros((n, total));
                    let mut col = 0;
                    for cache in &head_caches {
                        let w = cache.aggregate.ncols();
                        out.slice_mut(ndarray::s![.., col..col + w])
                            .assign(&cache.aggregate.mapv(sigmoid));
                        col += w;
                    }
                    (out, None)
                }
                Combine::Average => {
                    let out_dim = head_caches[0].aggregate.ncols();
                    let mut mean = Array2::zeros((n, out_dim));
                    for cache in &head_caches {
                        mean += &cache.aggregate;
                    }
                    mean /= layer.heads.len() as f64;
                    (mean.mapv(sigmoid), Some(mean))
                }
            };
            layers.push(LayerCache {
                input: h,
                heads: head_caches,
                mean_aggregate,
                output: output.clone(),
            });
            h = output;
        }
        GatCache { layers, neighbors }
    }

    /// Backward from `d_out = dL/d(final layer output)`. Accumulates
    /// parameter gradients into `grads` and returns the gradient with
    /// respect to the input node features.
    pub fn backward(
        &self,
        cache: &GatCache,
        d_out: &Array2<f64>,
        grads: &mut GatParams,
    ) -> Array2<f64> {
        let mut d_output = d_out.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let layer_cache = &cache.layers[l];
            let n = layer_cache.input.nrows();
            let mut d_input: Array2<f64> = Array2::zeros(layer_cache.input.raw_dim());

            // split dL/d(layer output) into per-head dL/d(aggregate)
            let d_aggregates: Vec<Array2<f64>> = match layer.combine {
                Combine::Concat => {
                    let mut parts = Vec::with_capacity(layer.heads.len());
                    let mut col = 0;
                    for head_cache in &layer_cache.heads {
                        let w = head_cache.aggregate.ncols();
                        let block = d_output.slice(ndarray::s![.., col..col + w]).to_owned();
                        let sig = head_cache.aggregate.mapv(sigmoid);
                        parts.push(&block * &(&sig * &sig.mapv(|v| 1.0 - v)));
                        col += w;
                    }
                    parts
                }
                Combine::Average => {
                    let mean = layer_cache.mean_aggregate.as_ref().expect("average cache");
                    let sig = mean.mapv(sigmoid);
                    let d_mean = &d_output * &(&sig * &sig.mapv(|v| 1.0 - v));
                    let scaled = d_mean.mapv(|v| v / layer.heads.len() as f64);
                    vec![scaled; layer.heads.len()]
                }
            };

            for (h_idx, d_agg) in d_aggregates.into_iter().enumerate() {
                let head = &layer.heads[h_idx];
                let head_cache = &layer_cache.heads[h_idx];
                let out_dim = head_cache.projected.ncols();
                let (a_self, a_nbr) = head.a.view().split_at(ndarray::Axis(0), out_dim);
                let mut d_projected: Array2<f64> = Array2::zeros(head_cache.projected.raw_dim());
                let grads_head = &mut grads.layers[l].heads[h_idx];
                for i in 0..n {
                    let nbrs = &cache.neighbors[i];
                    let alphas = &head_cache.alpha[i];
                    let d_s = d_agg.row(i);
                    // through the weighted average
                    let mut d_alpha = vec![0.0; nbrs.len()];
                    for (idx, &j) in nbrs.iter().enumerate() {
                        d_alpha[idx] = d_s.dot(&head_cache.projected.row(j));
                        d_projected
                            .row_mut(j)
                            .scaled_add(alphas[idx], &d_s);
                    }
                    // softmax jacobian
                    let dot: f64 = alphas.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
                    let d_scores: Vec<f64> = alphas
                        .iter()
                        .zip(&d_alpha)
                        .map(|(a, d)| a * (d - dot))
                        .collect();
                    // leaky relu and the attention vector
                    for (idx, &j) in nbrs.iter().enumerate() {
                        let d_raw =
                            d_scores[idx] * leaky_grad(head_cache.pre_leaky[i][idx], self.leaky_slope);
                        let p_i = head_cache.projected.row(i);
                        let p_j = head_cache.projected.row(j);
                        for d in 0..out_dim {
                            grads_head.a[d] += d_raw * p_i[d];
                            grads_head.a[out_dim + d] += d_raw * p_j[d];
                        }
                        d_projected.row_mut(i).scaled_add(d_raw, &a_self);
                        d_projected.row_mut(j).scaled_add(d_raw, &a_nbr);
                    }
                }
                grads_head.w += &d_projected.t().dot(&layer_cache.input);
                d_input += &d_projected.dot(&head.w);
            }
            d_output = d_input;
        }
        d_output
    }
}
