//! Finite-difference verification of the analytic gradients through the
//! whole architecture (numerical encoder, graph encoder, fusion gate,
//! classifier and focal loss).

use super::joint::{backward, forward_loss, Batch, JointParams};
use super::GraphTensors;
use crate::error::Result;

/// Compare analytic gradients of the mean focal loss against central
/// finite differences over every parameter; returns the maximum relative
/// error `|a - n| / max(|a| + |n|, 1e-5)`.
///
/// Runs in evaluation mode (no dropout) in double precision. Meant for
/// small batches and small graphs; cost is two forward passes per
/// parameter.
pub fn grad_check(
    params: &JointParams,
    batch: &Batch,
    graphs: &[GraphTensors],
    alpha: f64,
    gamma: f64,
    eps: f64,
) -> Result<f64> {
    let (_, _, cache) = forward_loss(params, batch, graphs, alpha, gamma, None)?;
    let mut grads = params.zeros_like();
    backward(params, batch, graphs, &cache, alpha, gamma, &mut grads);
    let analytic = grads.flat();

    let base = params.flat();
    let mut probe = params.clone();
    let mut max_rel_err: f64 = 0.0;
    for i in 0..base.len() {
        let mut theta = base.clone();
        theta[i] = base[i] + eps;
        probe.set_flat(&theta);
        let (loss_plus, _, _) = forward_loss(&probe, batch, graphs, alpha, gamma, None)?;
        theta[i] = base[i] - eps;
        probe.set_flat(&theta);
        let (loss_minus, _, _) = forward_loss(&probe, batch, graphs, alpha, gamma, None)?;
        let numeric = (loss_plus - loss_minus) / (2.0 * eps);
        let rel = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(1e-5);
        max_rel_err = max_rel_err.max(rel);
    }
    Ok(max_rel_err)
}
