//! Full-model assembly: numerical encoder + graph encoder + fusion gate +
//! classifier, with batched forward/backward over (pair, graph-node)
//! inputs and a single flat parameter vector for the optimizer.

use super::fusion::{fuse, fuse_backward, ClassifierParams, FusionCache, FusionParams};
use super::gat::{GatCache, GatParams, GraphTensors};
use super::wide_deep::{WideDeepCache, WideDeepParams};
use super::{focal_loss, focal_loss_grad, Activation, ModelDims};
use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// All trainable state. Doubles as the gradient container (`zeros_like`).
#[derive(Debug, Clone, PartialEq)]
pub struct JointParams {
    pub dims: ModelDims,
    pub activation: Activation,
    pub wide_deep: WideDeepParams,
    pub gat: GatParams,
    pub fusion: FusionParams,
    pub classifier: ClassifierParams,
    /// Fine-tuned node embeddings, one matrix per graph, when the
    /// embeddings are unfrozen; `None` keeps them fixed.
    pub node_feats: Option<Vec<Array2<f64>>>,
}

pub type JointGrads = JointParams;

impl JointParams {
    pub fn init(dims: ModelDims, activation: Activation, leaky_slope: f64, rng: &mut ChaCha12Rng) -> Result<Self> {
        dims.validate()?;
        Ok(Self {
            dims,
            activation,
            wide_deep: WideDeepParams::init(&dims, rng),
            gat: GatParams::init(&dims, leaky_slope, rng),
            fusion: FusionParams::init(dims.d_embed, rng),
            classifier: ClassifierParams::init(dims.d_embed),
            node_feats: None,
        })
    }

    /// Begin fine-tuning the node embeddings of `graphs`.
    pub fn unfreeze_node_feats(&mut self, graphs: &[GraphTensors]) {
        self.node_feats = Some(graphs.iter().map(|g| g.feats.clone()).collect());
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            dims: self.dims,
            activation: self.activation,
            wide_deep: self.wide_deep.zeros_like(),
            gat: self.gat.zeros_like(),
            fusion: self.fusion.zeros_like(),
            classifier: self.classifier.zeros_like(),
            node_feats: self
                .node_feats
                .as_ref()
                .map(|feats| feats.iter().map(|f| Array2::zeros(f.raw_dim())).collect()),
        }
    }

    /// Visit every trainable tensor in a fixed order. The dense input
    /// scaling is deliberately absent: it is data, not a parameter.
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![self.wide_deep.w_wide.as_slice().expect("contiguous")];
        for layer in &self.wide_deep.mlp {
            out.push(layer.w.as_slice().expect("contiguous"));
            out.push(layer.b.as_slice().expect("contiguous"));
        }
        out.push(self.wide_deep.w_deep.as_slice().expect("contiguous"));
        out.push(self.wide_deep.b.as_slice().expect("contiguous"));
        for layer in &self.gat.layers {
            for head in &layer.heads {
                out.push(head.w.as_slice().expect("contiguous"));
                out.push(head.a.as_slice().expect("contiguous"));
            }
        }
        out.push(self.fusion.w_numeric.as_slice().expect("contiguous"));
        out.push(self.fusion.w_graph.as_slice().expect("contiguous"));
        out.push(self.classifier.w.as_slice().expect("contiguous"));
        out.push(std::slice::from_ref(&self.classifier.b));
        if let Some(feats) = &self.node_feats {
            for f in feats {
                out.push(f.as_slice().expect("contiguous"));
            }
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        out.push(self.wide_deep.w_wide.as_slice_mut().expect("contiguous"));
        for layer in &mut self.wide_deep.mlp {
            out.push(layer.w.as_slice_mut().expect("contiguous"));
            out.push(layer.b.as_slice_mut().expect("contiguous"));
        }
        out.push(self.wide_deep.w_deep.as_slice_mut().expect("contiguous"));
        out.push(self.wide_deep.b.as_slice_mut().expect("contiguous"));
        for layer in &mut self.gat.layers {
            for head in &mut layer.heads {
                out.push(head.w.as_slice_mut().expect("contiguous"));
                out.push(head.a.as_slice_mut().expect("contiguous"));
            }
        }
        out.push(self.fusion.w_numeric.as_slice_mut().expect("contiguous"));
        out.push(self.fusion.w_graph.as_slice_mut().expect("contiguous"));
        out.push(self.classifier.w.as_slice_mut().expect("contiguous"));
        out.push(std::slice::from_mut(&mut self.classifier.b));
        if let Some(feats) = &mut self.node_feats {
            for f in feats {
                out.push(f.as_slice_mut().expect("contiguous"));
            }
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for tensor in self.tensors() {
            out.extend_from_slice(tensor);
        }
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        let mut offset = 0;
        for tensor in self.tensors_mut() {
            tensor.copy_from_slice(&values[offset..offset + tensor.len()]);
            offset += tensor.len();
        }
        debug_assert_eq!(offset, values.len());
    }

    /// Node features used for graph `g`: fine-tuned if unfrozen, the
    /// graph's own otherwise.
    pub fn feats_for<'a>(&'a self, graphs: &'a [GraphTensors], g: usize) -> &'a Array2<f64> {
        match &self.node_feats {
            Some(feats) => &feats[g],
            None => &graphs[g].feats,
        }
    }
}

/// One batch of pairs. `graph_nodes[i]` names the (graph, node) whose
/// embedding backs pair i; `None` means the commit is outside every graph
/// and contributes a zero graph embedding.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x_sparse: Array2<f64>,
    pub x_dense: Array2<f64>,
    pub labels: Vec<bool>,
    pub graph_nodes: Vec<Option<(usize, usize)>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn validate(&self, dims: &ModelDims) -> Result<()> {
        if self.x_sparse.ncols() != dims.d_sparse {
            return Err(Error::ShapeMismatch {
                expected: dims.d_sparse,
                got: self.x_sparse.ncols(),
                context: "sparse input width".into(),
            });
        }
        if self.x_dense.ncols() != dims.d_dense {
            return Err(Error::ShapeMismatch {
                expected: dims.d_dense,
                got: self.x_dense.ncols(),
                context: "dense input width".into(),
            });
        }
        Ok(())
    }
}

pub struct ForwardCache {
    pub wide_deep: WideDeepCache,
    /// per graph index; only graphs referenced by the batch are run
    pub gat: Vec<Option<GatCache>>,
    pub fusion: Vec<FusionCache>,
    pub e_g_rows: Vec<Array1<f64>>,
}

/// Mean focal loss over the batch plus everything needed for backward.
pub fn forward_loss(
    params: &JointParams,
    batch: &Batch,
    graphs: &[GraphTensors],
    alpha: f64,
    gamma: f64,
    dropout_masks: Option<Vec<Array2<f64>>>,
) -> Result<(f64, Vec<f64>, ForwardCache)> {
    batch.validate(&params.dims)?;
    let wd_cache = params.wide_deep.forward(
        &batch.x_sparse,
        &batch.x_dense,
        params.activation,
        dropout_masks,
    );

    let mut used = vec![false; graphs.len()];
    for node in batch.graph_nodes.iter().flatten() {
        used[node.0] = true;
    }
    let gat_caches: Vec<Option<GatCache>> = (0..graphs.len())
        .map(|g| {
            used[g].then(|| params.gat.forward(&graphs[g], params.feats_for(graphs, g)))
        })
        .collect();

    let d_embed = params.dims.d_embed;
    let mut fusion_caches = Vec::with_capacity(batch.len());
    let mut e_g_rows = Vec::with_capacity(batch.len());
    let mut scores = Vec::with_capacity(batch.len());
    let mut loss = 0.0;
    for i in 0..batch.len() {
        let e_n = wd_cache.e_n.row(i).to_owned();
        let e_g = match batch.graph_nodes[i] {
            Some((g, node)) => {
                let cache = gat_caches[g].as_ref().expect("graph was run");
                cache.layers.last().expect("two layers").output.row(node).to_owned()
            }
            None => Array1::zeros(d_embed),
        };
        let cache = fuse(&params.fusion, &params.classifier, &e_n, &e_g);
        loss += focal_loss(cache.score, batch.labels[i], alpha, gamma);
        scores.push(cache.score);
        fusion_caches.push(cache);
        e_g_rows.push(e_g);
    }
    loss /= batch.len().max(1) as f64;
    Ok((
        loss,
        scores,
        ForwardCache {
            wide_deep: wd_cache,
            gat: gat_caches,
            fusion: fusion_caches,
            e_g_rows,
        },
    ))
}

/// Backward pass for the mean focal loss; accumulates into `grads`.
pub fn backward(
    params: &JointParams,
    batch: &Batch,
    graphs: &[GraphTensors],
    cache: &ForwardCache,
    alpha: f64,
    gamma: f64,
    grads: &mut JointGrads,
) {
    let b = batch.len().max(1) as f64;
    let d_embed = params.dims.d_embed;
    let mut d_e_n = Array2::zeros((batch.len(), d_embed));
    let mut d_h_per_graph: Vec<Option<Array2<f64>>> = graphs
        .iter()
        .enumerate()
        .map(|(g, graph)| cache.gat[g].as_ref().map(|_| Array2::zeros((graph.n_nodes(), d_embed))))
        .collect();

    for i in 0..batch.len() {
        let fusion_cache = &cache.fusion[i];
        let d_score = focal_loss_grad(fusion_cache.score, batch.labels[i], alpha, gamma) / b;
        let e_n = cache.wide_deep.e_n.row(i).to_owned();
        let flows = fuse_backward(
            &params.fusion,
            &params.classifier,
            &e_n,
            &cache.e_g_rows[i],
            fusion_cache,
            d_score,
            &mut grads.fusion,
            &mut grads.classifier,
        );
        d_e_n.row_mut(i).assign(&flows.d_e_n);
        if let Some((g, node)) = batch.graph_nodes[i] {
            let d_h = d_h_per_graph[g].as_mut().expect("graph gradient buffer");
            let mut row = d_h.row_mut(node);
            row += &flows.d_e_g;
        }
    }

    params
        .wide_deep
        .backward(&d_e_n, &cache.wide_deep, params.activation, &mut grads.wide_deep);

    for (g, d_h) in d_h_per_graph.into_iter().enumerate() {
        let (Some(d_h), Some(gat_cache)) = (d_h, cache.gat[g].as_ref()) else {
            continue;
        };
        let d_feats = params.gat.backward(gat_cache, &d_h, &mut grads.gat);
        if let Some(node_grads) = &mut grads.node_feats {
            node_grads[g] += &d_feats;
        }
    }
}

/// Score pairs in evaluation mode (no dropout), batched.
pub fn score_batch(
    params: &JointParams,
    batch: &Batch,
    graphs: &[GraphTensors],
) -> Result<Vec<f64>> {
    let (_, scores, _) = forward_loss(params, batch, graphs, 1.0, 0.0, None)?;
    Ok(scores)
}

/// Draw inverted-dropout masks for each MLP layer.
pub fn dropout_masks(
    dims: &ModelDims,
    batch_len: usize,
    rate: f64,
    rng: &mut ChaCha12Rng,
) -> Option<Vec<Array2<f64>>> {
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 - rate;
    Some(
        (0..dims.mlp_layers)
            .map(|_| {
                Array2::from_shape_fn((batch_len, dims.mlp_width), |_| {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
            })
            .collect(),
    )
}
