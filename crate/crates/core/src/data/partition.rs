use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::rng::{self, Purpose};
use crate::{Error, Result};

/// Train and test index lists for every client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub client_train: Vec<Vec<usize>>,
    pub client_test: Vec<Vec<usize>>,
}

impl Partition {
    pub fn num_clients(&self) -> usize {
        self.client_train.len()
    }
}

fn check_clients(n: usize, clients: usize) -> Result<()> {
    if clients == 0 {
        return Err(Error::config("num_clients", "must be >= 1"));
    }
    if n < clients {
        return Err(Error::config(
            "num_clients",
            format!("{n} samples cannot give each of {clients} clients one sample"),
        ));
    }
    Ok(())
}

/// Seeded shuffle split into `clients` near-equal shards (sizes differ by at most one).
pub fn iid_partition(num_samples: usize, clients: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    check_clients(num_samples, clients)?;
    let mut order: Vec<usize> = (0..num_samples).collect();
    order.shuffle(&mut rng::stream(seed, Purpose::Partition, 0, 0));
    let (base, extra) = (num_samples / clients, num_samples % clients);
    let mut shards = Vec::with_capacity(clients);
    let mut start = 0;
    for k in 0..clients {
        let len = base + usize::from(k < extra);
        let mut shard = order[start..start + len].to_vec();
        shard.sort_unstable();
        shards.push(shard);
        start += len;
    }
    Ok(shards)
}

fn dirichlet<R: Rng + ?Sized>(gamma: f64, clients: usize, rng: &mut R) -> Vec<f64> {
    let dist = Gamma::new(gamma, 1.0).expect("gamma validated as positive");
    for _ in 0..64 {
        let draws: Vec<f64> = (0..clients).map(|_| dist.sample(rng)).collect();
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            return draws.into_iter().map(|x| x / sum).collect();
        }
    }
    // Every gamma draw underflowed; fall back to the symmetric point.
    vec![1.0 / clients as f64; clients]
}

/// Label-skewed split: for each class `c`, `p_c ~ Dirichlet(γ · 1_K)` and
/// every class-`c` sample is assigned to a client drawn from `p_c`.
///
/// A client left empty receives one sample moved from the currently largest
/// client, repeated until every client holds at least one sample.
pub fn dirichlet_partition(
    labels: &[usize],
    num_classes: usize,
    clients: usize,
    gamma: f64,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::config(
            "gamma",
            format!("must be positive, got {gamma}"),
        ));
    }
    check_clients(labels.len(), clients)?;
    let mut shards: Vec<Vec<usize>> = vec![Vec::new(); clients];
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        let mut rng = rng::stream(seed, Purpose::Partition, c as u64, 1);
        let p = dirichlet(gamma, clients, &mut rng);
        let pick = WeightedIndex::new(&p).expect("normalized non-negative weights");
        for &i in members {
            shards[pick.sample(&mut rng)].push(i);
        }
    }
    while let Some(empty) = shards.iter().position(Vec::is_empty) {
        let largest = (0..clients)
            .max_by(|&a, &b| shards[a].len().cmp(&shards[b].len()).then(b.cmp(&a)))
            .expect("at least one client");
        let moved = shards[largest].pop().expect("largest shard is non-empty");
        shards[empty].push(moved);
    }
    for shard in &mut shards {
        shard.sort_unstable();
    }
    Ok(shards)
}

/// Splits `n` into integer parts proportional to `weights` by largest
/// remainder; remainder ties go to the lower index.
pub fn largest_remainder(weights: &[usize], n: usize) -> Vec<usize> {
    let total: usize = weights.iter().sum();
    if total == 0 {
        return vec![0; weights.len()];
    }
    let mut parts: Vec<usize> = weights.iter().map(|&w| w * n / total).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // Remainders compared exactly as (w·n mod total).
    order.sort_by(|&a, &b| {
        ((weights[b] * n) % total)
            .cmp(&((weights[a] * n) % total))
            .then(a.cmp(&b))
    });
    let short = n - parts.iter().sum::<usize>();
    for &j in order.iter().take(short) {
        parts[j] += 1;
    }
    parts
}

/// Samples `per_client` test indices per client whose label histogram
/// matches the client's training histogram (largest-remainder rounding).
///
/// Classes are drawn without replacement; when a client needs more samples of
/// a class than the test set holds, the remainder is drawn with replacement
/// and a warning is logged.
pub fn personalized_test_split(
    test_labels: &[usize],
    num_classes: usize,
    train_histograms: &[Vec<usize>],
    per_client: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in test_labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut splits = Vec::with_capacity(train_histograms.len());
    for (k, hist) in train_histograms.iter().enumerate() {
        if hist.len() != num_classes {
            return Err(Error::Argument(format!(
                "client {k} histogram has {} classes, expected {num_classes}",
                hist.len()
            )));
        }
        let want = largest_remainder(hist, per_client);
        let mut rng = rng::stream(seed, Purpose::TestSplit, 0, k as u64);
        let mut picked = Vec::with_capacity(per_client);
        for (c, &need) in want.iter().enumerate() {
            if need == 0 {
                continue;
            }
            let pool = &by_class[c];
            if pool.is_empty() {
                return Err(Error::config(
                    "test_set",
                    format!("client {k} needs class {c} but the test set has none"),
                ));
            }
            let take = need.min(pool.len());
            picked.extend(
                rand::seq::index::sample(&mut rng, pool.len(), take)
                    .iter()
                    .map(|i| pool[i]),
            );
            if need > take {
                log::warn!(
                    "client {k}: test set holds {} samples of class {c}, drawing {} more with replacement",
                    pool.len(),
                    need - take
                );
                picked.extend((take..need).map(|_| pool[rng.random_range(0..pool.len())]));
            }
        }
        picked.sort_unstable();
        splits.push(picked);
    }
    Ok(splits)
}
