use crate::data::Dataset;
use crate::model::{ModelParams, Network};
use crate::sparse::Mask;
use crate::Result;

/// Denominators at or below this are treated as "gradients coincide".
pub const P_PROXY_TOLERANCE: f64 = 1e-12;

/// `‖m ⊙ (a − b)‖² / ‖a − b‖²`, or `None` when the denominator is at most
/// [`P_PROXY_TOLERANCE`].
pub fn masked_ratio(mask: &Mask, grad_a: &[f64], grad_b: &[f64]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, (a, b)) in grad_a.iter().zip(grad_b).enumerate() {
        let d2 = (a - b) * (a - b);
        den += d2;
        if mask.get(i) {
            num += d2;
        }
    }
    (den > P_PROXY_TOLERANCE).then(|| (num / den).clamp(0.0, 1.0))
}

/// Convergence-ratio proxy for one client: full-shard dense gradients at a
/// local trajectory point and at the round's synchronization point, with
/// the current mask standing in for the unobservable optimal mask.
pub fn p_proxy(
    net: &Network,
    mask: &Mask,
    local_point: &ModelParams,
    sync_point: &ModelParams,
    data: &Dataset,
    shard: &[usize],
) -> Result<Option<f64>> {
    let full = Mask::full(net.layout().clone());
    let batch = data.batch(shard);
    let a = net.backward(local_point, &full, &batch)?;
    let b = net.backward(sync_point, &full, &batch)?;
    Ok(masked_ratio(mask, &a.grad, &b.grad))
}

/// Hamming distance between consecutive masks.
pub fn mask_churn(prev: &Mask, next: &Mask) -> Result<usize> {
    prev.hamming(next)
}
