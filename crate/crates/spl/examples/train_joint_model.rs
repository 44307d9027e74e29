//! Train the joint model on a toy problem and verify the hand-written
//! gradients with central finite differences.
//!
//! ```bash
//! cargo run --example train_joint_model
//! ```

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use spl::model::{
    grad_check, joint::score_batch, train, train::batch_from_rows, Activation, GraphTensors,
    JointParams, ModelDims, TrainConfig,
};
use std::collections::BTreeMap;

fn main() -> spl::Result<()> {
    let dims = ModelDims {
        d_sparse: 8,
        d_dense: 4,
        d_embed: 16,
        mlp_width: 16,
        mlp_layers: 3,
        node_dim: 6,
        gat_heads: 4,
        gat_layers: 2,
    };
    let mut rng = ChaCha12Rng::seed_from_u64(42);

    // a small graph: two clusters of three nodes
    let feats = Array2::from_shape_fn((6, dims.node_dim), |_| rng.random_range(-1.0..1.0));
    let adjacency = vec![vec![1, 2], vec![0, 2], vec![0, 1], vec![4, 5], vec![3, 5], vec![3, 4]];
    let graph = GraphTensors {
        repo_id: "demo".into(),
        feats,
        adjacency,
        node_index: BTreeMap::new(),
    };

    // pairs: positives point at cluster one and carry a hot sparse slot
    let mut sparse = Vec::new();
    let mut dense = Vec::new();
    let mut labels = Vec::new();
    let mut nodes = Vec::new();
    for i in 0..60 {
        let positive = i % 4 == 0;
        let mut s = vec![0.0; dims.d_sparse];
        s[if positive { 0 } else { 1 + i % 7 }] = 1.0;
        sparse.push(s);
        dense.push((0..dims.d_dense).map(|_| rng.random_range(0.0..1.0)).collect());
        labels.push(positive);
        nodes.push(Some((0, if positive { i % 3 } else { 3 + i % 3 })));
    }
    let data = batch_from_rows(sparse, dense, labels.clone(), nodes)?;

    let params = JointParams::init(dims, Activation::Relu, 0.2, &mut rng)?;
    println!("model has {} parameters", params.n_params());

    // verify the analytic gradients before training
    let err = grad_check(&params, &data, std::slice::from_ref(&graph), 0.25, 2.0, 1e-5)?;
    println!("gradient check: max relative error {err:.2e} (threshold 1e-4)");
    assert!(err < 1e-4);

    let config = TrainConfig {
        learning_rate: 0.02,
        l2: 1e-5,
        dropout: 0.1,
        epochs: 40,
        batch_size: 32,
        focal_alpha: 0.25,
        focal_gamma: 2.0,
        seed: 7,
    };
    let result = train(params, &data, std::slice::from_ref(&graph), &config, None)?;
    println!(
        "loss: {:.4} -> {:.4} over {} epochs",
        result.loss_trace[0],
        result.loss_trace.last().unwrap(),
        result.loss_trace.len()
    );

    let scores = score_batch(&result.params, &data, std::slice::from_ref(&graph))?;
    let correct = scores
        .iter()
        .zip(&labels)
        .filter(|(s, &l)| (**s > 0.5) == l)
        .count();
    println!("training accuracy: {correct}/{}", labels.len());
    Ok(())
}
