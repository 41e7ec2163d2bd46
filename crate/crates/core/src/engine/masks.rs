use rand::Rng;

use super::client::sample_batch;
use crate::data::Dataset;
use crate::model::{flops_train_step, ModelParams, Network};
use crate::sparse::{gradient_regrow, magnitude_prune, random_regrow, Mask};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regrow {
    /// Largest dense-gradient magnitude on one fresh local batch.
    Gradient,
    /// Uniformly among inactive positions.
    Random,
}

/// Prunes `floor(α · active)` smallest-magnitude weights of `local_end` per
/// layer, then regrows as many. Returns the next mask and the FLOPs spent
/// on the dense gradient.
#[allow(clippy::too_many_arguments)]
pub fn next_masks_dst<R: Rng + ?Sized>(
    net: &Network,
    local_end: &ModelParams,
    mask: &Mask,
    alpha: f64,
    data: &Dataset,
    shard: &[usize],
    batch_size: usize,
    regrow: Regrow,
    rng: &mut R,
) -> Result<(Mask, u64)> {
    if alpha == 0.0 {
        return Ok((mask.clone(), 0));
    }
    let (pruned, counts) = magnitude_prune(&local_end.values, mask, alpha)?;
    match regrow {
        Regrow::Gradient => {
            let full = Mask::full(net.layout().clone());
            let batch = data.batch(&sample_batch(shard, batch_size, rng));
            let dense = net.backward(local_end, &full, &batch)?;
            let flops = flops_train_step(&full, batch.len());
            Ok((gradient_regrow(&pruned, &dense.grad, &counts)?, flops))
        }
        Regrow::Random => Ok((random_regrow(&pruned, &counts, rng)?, 0)),
    }
}

/// Static masks carry over unchanged.
pub fn next_masks_rsm(mask: &Mask) -> Mask {
    mask.clone()
}
