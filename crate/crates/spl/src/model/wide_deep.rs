//! The numerical encoder: a linear "wide" path over the one-hot sparse
//! block plus a three-layer MLP "deep" path over the dense block, summed
//! with a bias and squashed through a sigmoid:
//!
//! `E_N = sigma(w_wide . x_sparse + w_deep . f_deep(x_dense) + b)`

use super::{sigmoid, Activation, ModelDims};
use ndarray::{Array1, Array2, Axis};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// (out, in)
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WideDeepParams {
    /// (d_embed, d_sparse)
    pub w_wide: Array2<f64>,
    pub mlp: Vec<Dense>,
    /// (d_embed, mlp_width)
    pub w_deep: Array2<f64>,
    pub b: Array1<f64>,
    /// fixed affine input scaling of the dense block, from the persisted
    /// training-fold feature ranges; identity by default
    pub scale_offset: Array1<f64>,
    pub scale_mul: Array1<f64>,
}

fn xavier(rng: &mut impl Rng, out_dim: usize, in_dim: usize) -> Array2<f64> {
    let bound = (6.0 / (out_dim + in_dim) as f64).sqrt();
    Array2::from_shape_fn((out_dim, in_dim), |_| rng.random_range(-bound..bound))
}

impl WideDeepParams {
    pub fn init(dims: &ModelDims, rng: &mut impl Rng) -> Self {
        let mut mlp = Vec::with_capacity(dims.mlp_layers);
        let mut in_dim = dims.d_dense;
        for _ in 0..dims.mlp_layers {
            mlp.push(Dense {
                w: xavier(rng, dims.mlp_width, in_dim),
                b: Array1::zeros(dims.mlp_width),
            });
            in_dim = dims.mlp_width;
        }
        Self {
            w_wide: xavier(rng, dims.d_embed, dims.d_sparse),
            mlp,
            w_deep: xavier(rng, dims.d_embed, dims.mlp_width),
            b: Array1::zeros(dims.d_embed),
            scale_offset: Array1::zeros(dims.d_dense),
            scale_mul: Array1::ones(dims.d_dense),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w_wide: Array2::zeros(self.w_wide.raw_dim()),
            mlp: self
                .mlp
                .iter()
                .map(|d| Dense {
                    w: Array2::zeros(d.w.raw_dim()),
                    b: Array1::zeros(d.b.raw_dim()),
                })
                .collect(),
            w_deep: Array2::zeros(self.w_deep.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
            // scaling is not trainable; keep identity slots so shapes match
            scale_offset: Array1::zeros(self.scale_offset.raw_dim()),
            scale_mul: Array1::zeros(self.scale_mul.raw_dim()),
        }
    }

    pub fn set_dense_scale(&mut self, offset: &[f64], mul: &[f64]) {
        self.scale_offset = Array1::from_vec(offset.to_vec());
        self.scale_mul = Array1::from_vec(mul.to_vec());
    }
}

/// Work saved from the forward pass for the backward pass.
#[derive(Debug)]
pub struct WideDeepCache {
    pub x_sparse: Array2<f64>,
    pub x_scaled: Array2<f64>,
    /// per layer: pre-activation
    pub zs: Vec<Array2<f64>>,
    /// per layer: post-activation (after dropout in train mode)
    pub activations: Vec<Array2<f64>>,
    /// per layer: dropout keep masks already divided by the keep rate;
    /// empty in eval mode
    pub dropout: Vec<Array2<f64>>,
    pub e_n: Array2<f64>,
}

impl WideDeepParams {
    /// Batched forward pass. `dropout_masks` must hold one mask per MLP
    /// layer in train mode (inverted dropout, entries 0 or 1/keep).
    pub fn forward(
        &self,
        x_sparse: &Array2<f64>,
        x_dense: &Array2<f64>,
        activation: Activation,
        dropout_masks: Option<Vec<Array2<f64>>>,
    ) -> WideDeepCache {
        let x_scaled = {
            let mut x = x_dense.clone();
            for mut row in x.rows_mut() {
                row -= &self.scale_offset;
                row *= &self.scale_mul;
            }
            x
        };
        let mut zs = Vec::with_capacity(self.mlp.len());
        let mut activations = Vec::with_capacity(self.mlp.len());
        let masks = dropout_masks.unwrap_or_default();
        let mut h = x_scaled.clone();
        for (l, layer) in self.mlp.iter().enumerate() {
            let mut z = h.dot(&layer.w.t());
            for mut row in z.rows_mut() {
                row += &layer.b;
            }
            let mut a = z.mapv(|v| activation.apply(v));
            if let Some(mask) = masks.get(l) {
                a *= mask;
            }
            zs.push(z);
            activations.push(a.clone());
            h = a;
        }
        let deep_out = activations.last().cloned().unwrap_or_else(|| x_scaled.clone());
        let mut pre = x_sparse.dot(&self.w_wide.t()) + deep_out.dot(&self.w_deep.t());
        for mut row in pre.rows_mut() {
            row += &self.b;
        }
        let e_n = pre.mapv(sigmoid);
        WideDeepCache {
            x_sparse: x_sparse.clone(),
            x_scaled,
            zs,
            activations,
            dropout: masks,
            e_n,
        }
    }

    /// Accumulate gradients for `d_e_n = dL/dE_N` into `grads`.
    pub fn backward(
        &self,
        d_e_n: &Array2<f64>,
        cache: &WideDeepCache,
        activation: Activation,
        grads: &mut WideDeepParams,
    ) {
        // through the output sigmoid
        let d_pre = d_e_n * &(&cache.e_n * &cache.e_n.mapv(|v| 1.0 - v));
        grads.w_wide += &d_pre.t().dot(&cache.x_sparse);
        grads.b += &d_pre.sum_axis(Axis(0));
        let deep_out = cache
            .activations
            .last()
            .cloned()
            .unwrap_or_else(|| cache.x_scaled.clone());
        grads.w_deep += &d_pre.t().dot(&deep_out);

        let mut d_h = d_pre.dot(&self.w_deep);
        for l in (0..self.mlp.len()).rev() {
            if let Some(mask) = cache.dropout.get(l) {
                d_h *= mask;
            }
            let d_z = &d_h * &cache.zs[l].mapv(|v| activation.grad(v));
            let input = if l == 0 { &cache.x_scaled } else { &cache.activations[l - 1] };
            grads.mlp[l].w += &d_z.t().dot(input);
            grads.mlp[l].b += &d_z.sum_axis(Axis(0));
            d_h = d_z.dot(&self.mlp[l].w);
        }
    }
}
