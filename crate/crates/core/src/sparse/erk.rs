use super::LayerLayout;
use crate::{Error, Result};

fn check_target(target_density: f64) -> Result<()> {
    if !(target_density.is_finite() && target_density > 0.0) {
        return Err(Error::config(
            "density",
            format!("target density must be in (0, 1], got {target_density}"),
        ));
    }
    if target_density > 1.0 {
        return Err(Error::config(
            "density",
            format!("target density {target_density} asks for more active weights than exist"),
        ));
    }
    Ok(())
}

/// Global active-weight budget `round(target · total)`.
fn budget(layout: &LayerLayout, target_density: f64) -> Result<usize> {
    let budget = (target_density * layout.total() as f64).round() as usize;
    if budget == 0 {
        return Err(Error::config(
            "density",
            format!("target density {target_density} leaves no active weights"),
        ));
    }
    Ok(budget.min(layout.total()))
}

/// Per-layer densities under the Erdős-Rényi-Kernel allocation.
///
/// Each layer's density is `ε · scale · factor_j`, where `factor_j` is the
/// layer's ERK factor and `ε` is chosen so the layers together hold
/// `round(target · total)` active weights. Layers that would exceed density 1
/// are fixed at 1 and `ε` is re-solved over the rest until no layer exceeds 1.
///
/// The returned densities satisfy `Σ round(d_j · count_j) = budget` exactly:
/// where independent rounding would miss the budget, the affected layers are
/// snapped to the largest-remainder integer allocation.
pub fn erk_densities(layout: &LayerLayout, target_density: f64, scale: f64) -> Result<Vec<f64>> {
    check_target(target_density)?;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::config(
            "erk_scale",
            format!("must be positive, got {scale}"),
        ));
    }
    let budget = budget(layout, target_density)?;
    let layers = layout.layers();
    let raw: Vec<f64> = layers.iter().map(|l| scale * l.kind.erk_factor()).collect();

    let mut dense = vec![false; layers.len()];
    let epsilon = loop {
        let dense_count: usize = layers
            .iter()
            .zip(&dense)
            .filter(|(_, &d)| d)
            .map(|(l, _)| l.count)
            .sum();
        let weighted: f64 = layers
            .iter()
            .zip(&raw)
            .zip(&dense)
            .filter(|(_, &d)| !d)
            .map(|((l, &r), _)| r * l.count as f64)
            .sum();
        if weighted == 0.0 {
            break 0.0;
        }
        let epsilon = (budget as f64 - dense_count as f64) / weighted;
        let mut changed = false;
        for (j, &r) in raw.iter().enumerate() {
            if !dense[j] && epsilon * r > 1.0 {
                dense[j] = true;
                changed = true;
            }
        }
        if !changed {
            break epsilon;
        }
    };

    let continuous: Vec<f64> = raw
        .iter()
        .zip(&dense)
        .map(|(&r, &d)| if d { 1.0 } else { (epsilon * r).min(1.0) })
        .collect();
    snap_to_budget(layout, continuous, budget)
}

/// Same global density on every layer, snapped so the rounded per-layer
/// counts add up to the global budget.
pub fn uniform_densities(layout: &LayerLayout, target_density: f64) -> Result<Vec<f64>> {
    check_target(target_density)?;
    let budget = budget(layout, target_density)?;
    snap_to_budget(layout, vec![target_density; layout.num_layers()], budget)
}

/// Integer active counts whose sum is exactly `budget`, by largest remainder.
///
/// Remainder ties go to the lower layer index. A layer left with zero active
/// weights takes one from the layer holding the most.
pub fn allocate_active_counts(counts: &[usize], densities: &[f64], budget: usize) -> Vec<usize> {
    let ideal: Vec<f64> = counts
        .iter()
        .zip(densities)
        .map(|(&c, &d)| d * c as f64)
        .collect();
    let mut alloc: Vec<usize> = ideal
        .iter()
        .zip(counts)
        .map(|(&x, &c)| (x.floor() as usize).min(c))
        .collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut remaining = budget.saturating_sub(assigned);
    while remaining > 0 {
        let before = remaining;
        for &j in &order {
            if remaining == 0 {
                break;
            }
            if alloc[j] < counts[j] {
                alloc[j] += 1;
                remaining -= 1;
            }
        }
        if before == remaining {
            break;
        }
    }
    for j in 0..alloc.len() {
        if alloc[j] == 0 {
            let donor = (0..alloc.len())
                .max_by(|&a, &b| alloc[a].cmp(&alloc[b]).then(b.cmp(&a)))
                .expect("non-empty layout");
            if alloc[donor] > 1 {
                alloc[donor] -= 1;
                alloc[j] = 1;
            }
        }
    }
    alloc
}

fn snap_to_budget(
    layout: &LayerLayout,
    mut densities: Vec<f64>,
    budget: usize,
) -> Result<Vec<f64>> {
    let counts = layout.counts();
    let alloc = allocate_active_counts(&counts, &densities, budget);
    for (j, d) in densities.iter_mut().enumerate() {
        if alloc[j] == 0 {
            return Err(Error::config(
                "density",
                format!("layer {j} would receive no active weights"),
            ));
        }
        if (*d * counts[j] as f64).round() as usize != alloc[j] {
            *d = alloc[j] as f64 / counts[j] as f64;
        }
    }
    Ok(densities)
}
