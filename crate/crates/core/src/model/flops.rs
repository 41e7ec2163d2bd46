use crate::sparse::{LayerLayout, Mask};

/// Forward FLOPs for `batch_size` samples: two per active multiply-accumulate
/// plus one dense bias add per output activation.
pub fn flops_forward(mask: &Mask, batch_size: usize) -> u64 {
    let layout = mask.layout();
    let per_sample: u64 = layout
        .layers()
        .iter()
        .zip(mask.active_per_layer())
        .map(|(l, &active)| {
            let positions = l.kind.positions() as u64;
            2 * active as u64 * positions + l.kind.outputs() as u64 * positions
        })
        .sum();
    per_sample * batch_size as u64
}

pub fn dense_flops_forward(layout: &LayerLayout, batch_size: usize) -> u64 {
    let per_sample: u64 = layout
        .layers()
        .iter()
        .map(|l| {
            let positions = l.kind.positions() as u64;
            (2 * l.count as u64 + l.kind.outputs() as u64) * positions
        })
        .sum();
    per_sample * batch_size as u64
}

/// One forward plus a backward costed at twice the forward.
pub fn flops_train_step(mask: &Mask, batch_size: usize) -> u64 {
    3 * flops_forward(mask, batch_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{init_mask, LayerKind};
    use std::sync::Arc;

    #[test]
    fn linear_half_density() {
        let layout = Arc::new(LayerLayout::linear(&[(4, 8)]).unwrap());
        let m = init_mask(layout.clone(), &[0.5], 0).unwrap();
        assert_eq!(flops_forward(&m, 1), 40);
        assert_eq!(
            flops_forward(&Mask::full(layout.clone()), 3),
            dense_flops_forward(&layout, 3)
        );
        assert_eq!(dense_flops_forward(&layout, 1), 72);
    }

    #[test]
    fn train_step_is_three_forwards_by_layer_sum() {
        let layout = Arc::new(
            LayerLayout::new([
                LayerKind::Conv {
                    in_channels: 1,
                    out_channels: 2,
                    kernel_h: 2,
                    kernel_w: 2,
                    positions: 9,
                },
                LayerKind::Linear {
                    inputs: 18,
                    outputs: 3,
                },
            ])
            .unwrap(),
        );
        let m = init_mask(layout.clone(), &[0.5, 0.25], 4).unwrap();
        // Brute force: walk every active bit and every bias and add its cost.
        let mut brute = 0u64;
        for i in m.active_indices() {
            let layer = layout.layer_of(i).unwrap();
            brute += 2 * layout.layers()[layer].kind.positions() as u64;
        }
        brute += 2 * 9 + 3;
        assert_eq!(flops_forward(&m, 1), brute);
        assert_eq!(flops_train_step(&m, 5), 3 * 5 * brute);
    }

    #[test]
    fn monotone_in_active_counts() {
        let layout = Arc::new(LayerLayout::linear(&[(5, 4), (4, 3)]).unwrap());
        let mut m = Mask::empty(layout.clone());
        let mut last = flops_forward(&m, 2);
        for i in 0..layout.total() {
            m.set(i);
            let now = flops_forward(&m, 2);
            assert!(now >= last);
            last = now;
        }
    }
}
