use rand::Rng;

use crate::data::Dataset;
use crate::model::{flops_train_step, sgd_step, ModelParams, Network};
use crate::sparse::{LayerLayout, Mask};
use crate::{Error, Result};
use std::sync::Arc;

/// Draws one minibatch from `shard` without replacement. A shard no larger
/// than the batch is used whole, in shard order, without touching `rng`.
pub fn sample_batch<R: Rng + ?Sized>(
    shard: &[usize],
    batch_size: usize,
    rng: &mut R,
) -> Vec<usize> {
    if shard.len() <= batch_size {
        return shard.to_vec();
    }
    rand::seq::index::sample(rng, shard.len(), batch_size)
        .into_iter()
        .map(|i| shard[i])
        .collect()
}

/// Uniform random support of exactly `round(density · total)` positions
/// (at least one), drawn over the whole parameter vector.
pub fn upload_mask<R: Rng + ?Sized>(
    layout: &Arc<LayerLayout>,
    density: f64,
    rng: &mut R,
) -> Result<Mask> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::config(
            "upload_density",
            format!("must lie in (0, 1], got {density}"),
        ));
    }
    let total = layout.total();
    let k = ((density * total as f64).round() as usize).clamp(1, total);
    let mut bits = vec![false; total];
    for i in rand::seq::index::sample(rng, total, k) {
        bits[i] = true;
    }
    Mask::from_bits(layout.clone(), &bits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalTrainOutput {
    /// `w̃_{k,t,N}`.
    pub end: ModelParams,
    /// `w̃_{k,t,0} − w̃_{k,t,N}`.
    pub delta: Vec<f64>,
    pub bias_delta: Vec<Vec<f64>>,
    pub steps: usize,
    /// Mean minibatch loss over the steps (0 when no step ran).
    pub mean_loss: f64,
    pub mean_accuracy: f64,
    pub flops: u64,
}

/// Runs `steps` masked SGD steps from `start` on minibatches of `shard`.
#[allow(clippy::too_many_arguments)]
pub fn client_local_train<R: Rng + ?Sized>(
    net: &Network,
    start: &ModelParams,
    mask: &Mask,
    data: &Dataset,
    shard: &[usize],
    steps: usize,
    lr: f64,
    weight_decay: f64,
    batch_size: usize,
    rng: &mut R,
) -> Result<LocalTrainOutput> {
    if shard.is_empty() {
        return Err(Error::config("partition", "client shard is empty"));
    }
    let mut w = start.clone();
    let (mut loss, mut acc, mut flops) = (0.0, 0.0, 0u64);
    for _ in 0..steps {
        let batch = data.batch(&sample_batch(shard, batch_size, rng));
        let g = net.backward(&w, mask, &batch)?;
        loss += g.loss;
        acc += g.correct as f64 / batch.len() as f64;
        flops += flops_train_step(mask, batch.len());
        w = sgd_step(&w, mask, &g, lr, weight_decay)?;
    }
    w.check_finite()?;
    let delta = start
        .values
        .iter()
        .zip(&w.values)
        .map(|(a, b)| a - b)
        .collect();
    let bias_delta = start
        .biases
        .iter()
        .zip(&w.biases)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect();
    let n = steps.max(1) as f64;
    Ok(LocalTrainOutput {
        end: w,
        delta,
        bias_delta,
        steps,
        mean_loss: loss / n,
        mean_accuracy: acc / n,
        flops,
    })
}
