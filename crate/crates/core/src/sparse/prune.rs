use std::sync::Arc;

use rand::Rng;

use super::{LayerLayout, Mask};
use crate::rng::{self, Purpose};
use crate::{Error, Result};

/// Draws `round(d_j · count_j)` active positions uniformly in every layer.
///
/// The draw is a pure function of `(layout, densities, seed)`.
pub fn init_mask(layout: Arc<LayerLayout>, densities: &[f64], seed: u64) -> Result<Mask> {
    if densities.len() != layout.num_layers() {
        return Err(Error::Argument(format!(
            "{} densities for {} layers",
            densities.len(),
            layout.num_layers()
        )));
    }
    if let Some((j, d)) = densities
        .iter()
        .enumerate()
        .find(|(_, &d)| !(d > 0.0 && d <= 1.0))
    {
        return Err(Error::config(
            "density",
            format!("layer {j} density must lie in (0, 1], got {d}"),
        ));
    }
    let mut rng = rng::stream(seed, Purpose::MaskInit, 0, 0);
    let mut mask = Mask::empty(layout.clone());
    for (layer, &d) in layout.layers().iter().zip(densities) {
        let k = ((d * layer.count as f64).round() as usize).min(layer.count);
        if k == 0 {
            return Err(Error::config(
                "density",
                format!(
                    "density {d} rounds to zero active weights in a layer of {}",
                    layer.count
                ),
            ));
        }
        for i in rand::seq::index::sample(&mut rng, layer.count, k) {
            mask.set(layer.offset + i);
        }
    }
    Ok(mask)
}

/// Clears `floor(α · active_j)` bits per layer, the active positions with
/// the smallest `|weight|` (ties: lowest flat index first).
///
/// Returns the intermediate mask and the number of bits cleared per layer.
pub fn magnitude_prune(weights: &[f64], mask: &Mask, alpha: f64) -> Result<(Mask, Vec<usize>)> {
    if weights.len() != mask.len() {
        return Err(Error::Argument(format!(
            "{} weights for a {}-bit mask",
            weights.len(),
            mask.len()
        )));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Argument(format!(
            "prune fraction must lie in [0, 1), got {alpha}"
        )));
    }
    let mut out = mask.clone();
    let mut pruned = Vec::with_capacity(mask.layout().num_layers());
    for j in 0..mask.layout().num_layers() {
        let k = (alpha * mask.active_per_layer()[j] as f64).floor() as usize;
        if k > 0 {
            let mut candidates: Vec<usize> = mask.active_in_layer(j).collect();
            candidates.sort_by(|&a, &b| {
                weights[a]
                    .abs()
                    .total_cmp(&weights[b].abs())
                    .then(a.cmp(&b))
            });
            for &i in &candidates[..k] {
                out.clear(i);
            }
        }
        pruned.push(k);
    }
    Ok((out, pruned))
}

fn check_counts(mask: &Mask, counts: &[usize]) -> Result<()> {
    let layout = mask.layout();
    if counts.len() != layout.num_layers() {
        return Err(Error::Argument(format!(
            "{} regrow counts for {} layers",
            counts.len(),
            layout.num_layers()
        )));
    }
    for (j, (&want, layer)) in counts.iter().zip(layout.layers()).enumerate() {
        let inactive = layer.count - mask.active_per_layer()[j];
        if want > inactive {
            return Err(Error::Internal(format!(
                "layer {j}: asked to regrow {want} weights but only {inactive} are inactive"
            )));
        }
    }
    Ok(())
}

/// Sets `counts[j]` bits per layer at the inactive positions with the largest
/// `|grad|` (ties: lowest flat index first).
pub fn gradient_regrow(mask: &Mask, dense_grad: &[f64], counts: &[usize]) -> Result<Mask> {
    if dense_grad.len() != mask.len() {
        return Err(Error::Argument(format!(
            "{} gradient entries for a {}-bit mask",
            dense_grad.len(),
            mask.len()
        )));
    }
    check_counts(mask, counts)?;
    let mut out = mask.clone();
    for (j, &k) in counts.iter().enumerate() {
        if k == 0 {
            continue;
        }
        let mut candidates: Vec<usize> = mask.inactive_in_layer(j).collect();
        candidates.sort_by(|&a, &b| {
            dense_grad[b]
                .abs()
                .total_cmp(&dense_grad[a].abs())
                .then(a.cmp(&b))
        });
        for &i in &candidates[..k] {
            out.set(i);
        }
    }
    Ok(out)
}

/// Sets `counts[j]` bits per layer at inactive positions drawn uniformly.
pub fn random_regrow<R: Rng + ?Sized>(mask: &Mask, counts: &[usize], rng: &mut R) -> Result<Mask> {
    check_counts(mask, counts)?;
    let mut out = mask.clone();
    for (j, &k) in counts.iter().enumerate() {
        if k == 0 {
            continue;
        }
        let candidates: Vec<usize> = mask.inactive_in_layer(j).collect();
        for pick in rand::seq::index::sample(rng, candidates.len(), k) {
            out.set(candidates[pick]);
        }
    }
    Ok(out)
}

/// Elementwise `w ⊙ m`; inactive positions become exactly `0.0`.
pub fn apply_mask(weights: &[f64], mask: &Mask) -> Result<Vec<f64>> {
    if weights.len() != mask.len() {
        return Err(Error::Argument(format!(
            "{} weights for a {}-bit mask",
            weights.len(),
            mask.len()
        )));
    }
    Ok(weights
        .iter()
        .enumerate()
        .map(|(i, &w)| if mask.get(i) { w } else { 0.0 })
        .collect())
}
