//! Checkpoints: a little-endian binary blob of the flat parameter vector
//! next to a JSON manifest describing dimensions, activation, seed and
//! whatever run metadata the caller attaches.

use super::fusion::{ClassifierParams, FusionParams};
use super::gat::GatParams;
use super::joint::JointParams;
use super::wide_deep::WideDeepParams;
use super::{Activation, ModelDims};
use crate::error::{Error, Result};
use crate::util;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::path::Path;

const MAGIC: &[u8; 8] = b"SPLCKPT1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub dims: ModelDims,
    pub activation: Activation,
    pub leaky_slope: f64,
    pub n_params: usize,
    pub dense_scale_offset: Vec<f64>,
    pub dense_scale_mul: Vec<f64>,
    pub node_feat_shapes: Vec<(usize, usize)>,
    pub meta: serde_json::Value,
}

/// Write `<path>` (binary) and `<path>.json` (manifest).
pub fn save(path: &Path, params: &JointParams, meta: &serde_json::Value) -> Result<()> {
    let flat = params.flat();
    let mut buf = Vec::with_capacity(16 + flat.len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    for v in &flat {
        buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    util::atomic_write(path, &buf)?;
    let manifest = Manifest {
        dims: params.dims,
        activation: params.activation,
        leaky_slope: params.gat.leaky_slope,
        n_params: flat.len(),
        dense_scale_offset: params.wide_deep.scale_offset.to_vec(),
        dense_scale_mul: params.wide_deep.scale_mul.to_vec(),
        node_feat_shapes: params
            .node_feats
            .as_ref()
            .map(|f| f.iter().map(|a| (a.nrows(), a.ncols())).collect())
            .unwrap_or_default(),
        meta: meta.clone(),
    };
    util::atomic_write(
        &path.with_extension("json"),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )
}

/// Load a checkpoint written by [`save`].
pub fn load(path: &Path) -> Result<(JointParams, Manifest)> {
    let manifest: Manifest =
        serde_json::from_slice(&util::read_file(&path.with_extension("json"))?)?;
    let bytes = util::read_file(path)?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint(format!("{}: bad magic", path.display())));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    if bytes.len() != 16 + n * 8 {
        return Err(Error::Checkpoint(format!(
            "{}: expected {} parameters, file holds {} bytes",
            path.display(),
            n,
            bytes.len()
        )));
    }
    let mut flat = Vec::with_capacity(n);
    for i in 0..n {
        let start = 16 + i * 8;
        flat.push(f64::from_bits(u64::from_le_bytes(
            bytes[start..start + 8].try_into().expect("8 bytes"),
        )));
    }
    let mut params = empty_params(&manifest)?;
    if params.n_params() != n {
        return Err(Error::Checkpoint(format!(
            "{}: manifest dims imply {} parameters, blob holds {}",
            path.display(),
            params.n_params(),
            n
        )));
    }
    params.set_flat(&flat);
    params
        .wide_deep
        .set_dense_scale(&manifest.dense_scale_offset, &manifest.dense_scale_mul);
    Ok((params, manifest))
}

fn empty_params(manifest: &Manifest) -> Result<JointParams> {
    use super::gat::{Combine, GatHead, GatLayer};
    use super::wide_deep::Dense;
    let dims = manifest.dims;
    dims.validate()?;
    let mut mlp = Vec::with_capacity(dims.mlp_layers);
    let mut in_dim = dims.d_dense;
    for _ in 0..dims.mlp_layers {
        mlp.push(Dense {
            w: Array2::zeros((dims.mlp_width, in_dim)),
            b: Array1::zeros(dims.mlp_width),
        });
        in_dim = dims.mlp_width;
    }
    let head_out_1 = dims.d_embed / dims.gat_heads;
    let layer1 = GatLayer {
        heads: (0..dims.gat_heads)
            .map(|_| GatHead {
                w: Array2::zeros((head_out_1, dims.node_dim)),
                a: Array1::zeros(2 * head_out_1),
            })
            .collect(),
        combine: Combine::Concat,
    };
    let layer2 = GatLayer {
        heads: (0..dims.gat_heads)
            .map(|_| GatHead {
                w: Array2::zeros((dims.d_embed, dims.d_embed)),
                a: Array1::zeros(2 * dims.d_embed),
            })
            .collect(),
        combine: Combine::Average,
    };
    Ok(JointParams {
        dims,
        activation: manifest.activation,
        wide_deep: WideDeepParams {
            w_wide: Array2::zeros((dims.d_embed, dims.d_sparse)),
            mlp,
            w_deep: Array2::zeros((dims.d_embed, dims.mlp_width)),
            b: Array1::zeros(dims.d_embed),
            scale_offset: Array1::zeros(dims.d_dense),
            scale_mul: Array1::ones(dims.d_dense),
        },
        gat: GatParams {
            layers: vec![layer1, layer2],
            leaky_slope: manifest.leaky_slope,
        },
        fusion: FusionParams {
            w_numeric: Array1::zeros(dims.d_embed),
            w_graph: Array1::zeros(dims.d_embed),
        },
        classifier: ClassifierParams::init(dims.d_embed),
        node_feats: if manifest.node_feat_shapes.is_empty() {
            None
        } else {
            Some(
                manifest
                    .node_feat_shapes
                    .iter()
                    .map(|&(r, c)| Array2::zeros((r, c)))
                    .collect(),
            )
        },
    })
}
