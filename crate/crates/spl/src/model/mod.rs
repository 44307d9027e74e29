//! The trainable ranking model: a Wide&Deep numerical encoder over the
//! pair features, a two-layer multi-head graph attention encoder over the
//! endorsed commit graph, a softmax fusion gate blending the two
//! embeddings, and a linear classifier trained with focal loss.
//!
//! All math is double precision and hand-differentiated; `grad_check`
//! verifies every analytic gradient against central finite differences.

pub mod adam;
pub mod checkpoint;
pub mod fusion;
pub mod gat;
pub mod grad_check;
pub mod joint;
pub mod train;
pub mod wide_deep;

pub use adam::Adam;
pub use fusion::{focal_loss, focal_loss_grad, fuse, FusionCache};
pub use gat::{GatParams, GraphTensors};
pub use grad_check::grad_check;
pub use joint::{Batch, JointGrads, JointParams, Mode};
pub use train::{train, TrainConfig, TrainResult};
pub use wide_deep::WideDeepParams;

use serde::{Deserialize, Serialize};

/// Architecture dimensions. Defaults mirror the reference configuration
/// (256-wide embeddings and MLP, two GAT layers with four heads); smaller
/// values are used by tests and fast pipeline runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d_sparse: usize,
    pub d_dense: usize,
    /// shared output width of both encoders
    pub d_embed: usize,
    pub mlp_width: usize,
    pub mlp_layers: usize,
    /// width of the initial node embeddings
    pub node_dim: usize,
    pub gat_heads: usize,
    pub gat_layers: usize,
}

impl ModelDims {
    pub fn reference(d_sparse: usize, d_dense: usize, node_dim: usize) -> Self {
        Self {
            d_sparse,
            d_dense,
            d_embed: 256,
            mlp_width: 256,
            mlp_layers: 3,
            node_dim,
            gat_heads: 4,
            gat_layers: 2,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.d_embed % self.gat_heads != 0 {
            return Err(crate::Error::Config(format!(
                "d_embed {} must be divisible by gat_heads {}",
                self.d_embed, self.gat_heads
            )));
        }
        if self.gat_layers != 2 {
            return Err(crate::Error::Config(
                "the graph encoder is a two-layer GAT".into(),
            ));
        }
        if self.mlp_layers == 0 || self.mlp_width == 0 || self.d_embed == 0 {
            return Err(crate::Error::Config("zero-sized model dimension".into()));
        }
        Ok(())
    }
}

/// Elementwise nonlinearity of the deep MLP path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative given the pre-activation input.
    pub fn grad(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - x.tanh() * x.tanh(),
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
