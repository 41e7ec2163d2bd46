use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::rng::{self, Purpose};
use crate::{Error, Result};

fn class_means(num_classes: usize, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, Purpose::Synthetic, 0, 0);
    (0..num_classes * dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect()
}

fn sample_clusters(
    means: &[f64],
    num_classes: usize,
    dim: usize,
    per_class: usize,
    spread: f64,
    seed: u64,
    stream: u64,
) -> Result<Dataset> {
    let mut rng = rng::stream(seed, Purpose::Synthetic, stream, 0);
    let mut features = Vec::with_capacity(num_classes * per_class * dim);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for c in 0..num_classes {
        let mean = &means[c * dim..(c + 1) * dim];
        for _ in 0..per_class {
            for &mu in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                features.push(mu + spread * z);
            }
            labels.push(c);
        }
    }
    Dataset::new(features, dim, labels, num_classes)
}

fn check(num_classes: usize, dim: usize, per_class: usize, spread: f64) -> Result<()> {
    if num_classes < 2 {
        return Err(Error::config(
            "num_classes",
            "at least 2 classes are required",
        ));
    }
    if dim == 0 {
        return Err(Error::config("dim", "must be >= 1"));
    }
    if per_class == 0 {
        return Err(Error::config("per_class", "must be >= 1"));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(Error::config(
            "spread",
            format!("must be finite and >= 0, got {spread}"),
        ));
    }
    Ok(())
}

/// Gaussian class clusters: class means are standard normal vectors drawn
/// from `seed`, samples are `mean + spread · N(0, I)`. Rows are grouped by
/// class in ascending label order.
pub fn synth_dataset(
    num_classes: usize,
    dim: usize,
    per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    check(num_classes, dim, per_class, spread)?;
    let means = class_means(num_classes, dim, seed);
    sample_clusters(&means, num_classes, dim, per_class, spread, seed, 1)
}

/// Train and test sets sharing the same class means but independent noise.
pub fn synth_train_test(
    num_classes: usize,
    dim: usize,
    train_per_class: usize,
    test_per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    check(num_classes, dim, train_per_class, spread)?;
    check(num_classes, dim, test_per_class, spread)?;
    let means = class_means(num_classes, dim, seed);
    Ok((
        sample_clusters(&means, num_classes, dim, train_per_class, spread, seed, 1)?,
        sample_clusters(&means, num_classes, dim, test_per_class, spread, seed, 2)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nearest_centroid_accuracy(ds: &Dataset) -> f64 {
        let (c, d) = (ds.num_classes(), ds.dim());
        let mut centroids = vec![0.0; c * d];
        let hist = ds.class_histogram(&(0..ds.len()).collect::<Vec<_>>());
        for i in 0..ds.len() {
            let l = ds.labels()[i];
            for (k, v) in ds.row(i).iter().enumerate() {
                centroids[l * d + k] += v / hist[l] as f64;
            }
        }
        let correct = (0..ds.len())
            .filter(|&i| {
                let row = ds.row(i);
                let best = (0..c)
                    .min_by(|&a, &b| {
                        let da: f64 = row
                            .iter()
                            .zip(&centroids[a * d..])
                            .map(|(x, m)| (x - m).powi(2))
                            .sum();
                        let db: f64 = row
                            .iter()
                            .zip(&centroids[b * d..])
                            .map(|(x, m)| (x - m).powi(2))
                            .sum();
                        da.total_cmp(&db)
                    })
                    .unwrap();
                best == ds.labels()[i]
            })
            .count();
        correct as f64 / ds.len() as f64
    }

    #[test]
    fn zero_spread_is_perfectly_separable() {
        let ds = synth_dataset(5, 4, 20, 0.0, 3).unwrap();
        assert_eq!(nearest_centroid_accuracy(&ds), 1.0);
    }

    #[test]
    fn deterministic_under_seed() {
        assert_eq!(
            synth_dataset(3, 2, 5, 0.5, 9).unwrap(),
            synth_dataset(3, 2, 5, 0.5, 9).unwrap()
        );
        assert_ne!(
            synth_dataset(3, 2, 5, 0.5, 9).unwrap(),
            synth_dataset(3, 2, 5, 0.5, 10).unwrap()
        );
    }

    #[test]
    fn train_test_share_means() {
        let (train, test) = synth_train_test(4, 3, 10, 5, 0.0, 1).unwrap();
        assert_eq!(train.row(0), test.row(0));
        assert_eq!(test.len(), 20);
    }

    #[test]
    fn rejects_degenerate_requests() {
        assert!(synth_dataset(1, 2, 5, 0.1, 0).is_err());
        assert!(synth_dataset(2, 2, 0, 0.1, 0).is_err());
        assert!(synth_dataset(2, 2, 5, -1.0, 0).is_err());
    }
}
