//! Independent recomputations shared by the integration tests and the
//! acceptance suite. Each returns a short description on success and the
//! first mismatch on failure.

use std::sync::Mutex;

use fedspa::config::StrategyKind;
use fedspa::engine::{
    client_local_train, run_round, sample_batch, sample_participants, ClientUpdate, NoObserver,
    RoundObserver, ServerState,
};
use fedspa::model::{Architecture, Batch, ConvSpec, ModelParams, Network};
use fedspa::rng::{self, Purpose};
use fedspa::sparse::init_mask;
use fedspa::Mask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

/// A 5-step client update against a hand-written replay with the same batches.
pub fn five_step_replay(seed: u64) -> Check {
    let config = super::small_config(6, 3, 10);
    let fed = super::federation(&config, seed);
    let cfg = super::engine(&config, StrategyKind::DstGradient, seed);
    let state = ServerState::init(&fed.net, &cfg).map_err(|e| e.to_string())?;
    let (k, t) = (2usize, 4u64);
    let shard = &fed.partition.client_train[k];
    let mask = &state.client_masks[k];
    let start = state.global.masked(mask).map_err(|e| e.to_string())?;
    let (lr, wd, b) = (0.05, 0.001, 4);

    let mut rng = rng::stream(seed, Purpose::LocalBatches, t, k as u64);
    let out = client_local_train(
        &fed.net, &start, mask, &fed.train, shard, 5, lr, wd, b, &mut rng,
    )
    .map_err(|e| e.to_string())?;

    let mut rng = rng::stream(seed, Purpose::LocalBatches, t, k as u64);
    let mut w = start.clone();
    for _ in 0..5 {
        let batch = fed.train.batch(&sample_batch(shard, b, &mut rng));
        let g = fed
            .net
            .backward(&w, mask, &batch)
            .map_err(|e| e.to_string())?;
        for i in 0..w.values.len() {
            if mask.get(i) {
                w.values[i] -= lr * (g.grad[i] + wd * w.values[i]);
            }
        }
        for (bl, gl) in w.biases.iter_mut().zip(&g.bias_grad) {
            for (bv, gv) in bl.iter_mut().zip(gl) {
                *bv -= lr * gv;
            }
        }
    }
    if out.end != w {
        return Err("local trajectory differs from replay".into());
    }
    for i in 0..w.values.len() {
        let expected = start.values[i] - w.values[i];
        if out.delta[i] != expected {
            return Err(format!(
                "delta[{i}] = {} but replay gives {expected}",
                out.delta[i]
            ));
        }
        if !mask.get(i) && out.delta[i] != 0.0 {
            return Err(format!("delta[{i}] lies outside the mask"));
        }
    }
    Ok(format!("{} coordinates bit-identical", w.values.len()))
}

/// Server rounds against `w_t − mean(U_k)` with every `U_k` recomputed.
pub fn server_round_brute_force(seed: u64, rounds: usize) -> Check {
    let (clients, per_round) = (8, 4);
    let config = super::small_config(clients, per_round, rounds);
    let fed = super::federation(&config, seed);
    let cfg = super::engine(&config, StrategyKind::DstGradient, seed);
    let mut state = ServerState::init(&fed.net, &cfg).map_err(|e| e.to_string())?;
    for _ in 0..rounds {
        let (next, ledger) =
            run_round(&state, &fed, &cfg, &NoObserver).map_err(|e| e.to_string())?;
        let expected_participants =
            sample_participants(seed, state.round, clients, per_round).unwrap();
        if ledger.participants != expected_participants {
            return Err(format!("round {}: unexpected participants", state.round));
        }
        let mut deltas = Vec::new();
        let mut bias_deltas = Vec::new();
        for &k in &ledger.participants {
            let start = state.global.masked(&state.client_masks[k]).unwrap();
            let mut rng = rng::stream(seed, Purpose::LocalBatches, state.round as u64, k as u64);
            let shard = &fed.partition.client_train[k];
            let out = client_local_train(
                &fed.net,
                &start,
                &state.client_masks[k],
                &fed.train,
                shard,
                cfg.local_steps_for(shard.len()),
                state.lr,
                cfg.weight_decay,
                cfg.batch_size,
                &mut rng,
            )
            .map_err(|e| e.to_string())?;
            deltas.push(out.delta);
            bias_deltas.push(out.bias_delta);
        }
        let s = deltas.len() as f64;
        for i in 0..state.global.values.len() {
            let mut sum = 0.0;
            for d in &deltas {
                sum += d[i];
            }
            if next.global.values[i] != state.global.values[i] - sum / s {
                return Err(format!("round {}: weight {i} differs", state.round));
            }
        }
        for j in 0..state.global.biases.len() {
            for o in 0..state.global.biases[j].len() {
                let mut sum = 0.0;
                for d in &bias_deltas {
                    sum += d[j][o];
                }
                if next.global.biases[j][o] != state.global.biases[j][o] - sum / s {
                    return Err(format!("round {}: bias {j}/{o} differs", state.round));
                }
            }
        }
        for k in 0..clients {
            if !ledger.participants.contains(&k) && next.client_masks[k] != state.client_masks[k] {
                return Err(format!(
                    "round {}: idle client {k} changed mask",
                    state.round
                ));
            }
        }
        state = next;
    }
    Ok(format!("{rounds} rounds bit-identical"))
}

/// Shared-mask RSM against an independent FedAvg loop on the network whose
/// inactive weights are zero and never updated.
pub fn rsm_matches_frozen_fedavg(
    clients: usize,
    per_round: usize,
    rounds: usize,
    seed: u64,
) -> Check {
    let config = super::small_config(clients, per_round, rounds);
    let fed = super::federation(&config, seed);
    let cfg = super::engine(&config, StrategyKind::Rsm, seed);
    let mut state = ServerState::init(&fed.net, &cfg).map_err(|e| e.to_string())?;
    let mask = state.client_masks[0].clone();
    if state.client_masks.iter().any(|m| *m != mask) {
        return Err("clients do not share one mask".into());
    }
    let full = Mask::full(fed.net.layout().clone());

    let mut frozen = state.global.clone();
    for (i, w) in frozen.values.iter_mut().enumerate() {
        if !mask.get(i) {
            *w = 0.0;
        }
    }
    let mut lr = cfg.lr;
    for t in 0..rounds {
        let (next, ledger) =
            run_round(&state, &fed, &cfg, &NoObserver).map_err(|e| e.to_string())?;
        let participants = sample_participants(seed, t, clients, per_round).unwrap();
        if ledger.participants != participants {
            return Err(format!("round {t}: participants differ"));
        }
        let mut sum = vec![0.0; frozen.values.len()];
        let mut bias_sum: Vec<Vec<f64>> =
            frozen.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        for &k in &participants {
            let shard = &fed.partition.client_train[k];
            let mut rng = rng::stream(seed, Purpose::LocalBatches, t as u64, k as u64);
            let mut w = frozen.clone();
            for _ in 0..cfg.local_steps_for(shard.len()) {
                let batch = fed
                    .train
                    .batch(&sample_batch(shard, cfg.batch_size, &mut rng));
                let g = fed
                    .net
                    .backward(&w, &full, &batch)
                    .map_err(|e| e.to_string())?;
                for i in 0..w.values.len() {
                    if mask.get(i) {
                        w.values[i] -= lr * (g.grad[i] + cfg.weight_decay * w.values[i]);
                    }
                }
                for (b, gb) in w.biases.iter_mut().zip(&g.bias_grad) {
                    for (bv, gv) in b.iter_mut().zip(gb) {
                        *bv -= lr * gv;
                    }
                }
            }
            for (s, (a, b)) in sum.iter_mut().zip(frozen.values.iter().zip(&w.values)) {
                *s += a - b;
            }
            for (bs, (a, b)) in bias_sum.iter_mut().zip(frozen.biases.iter().zip(&w.biases)) {
                for (s, (x, y)) in bs.iter_mut().zip(a.iter().zip(b)) {
                    *s += x - y;
                }
            }
        }
        let s = participants.len() as f64;
        for (w, g) in frozen.values.iter_mut().zip(&sum) {
            *w -= g / s;
        }
        for (b, g) in frozen.biases.iter_mut().zip(&bias_sum) {
            for (bv, gv) in b.iter_mut().zip(g) {
                *bv -= gv / s;
            }
        }
        lr *= cfg.lr_decay;

        let view = next.global.masked(&mask).unwrap();
        if view.values != frozen.values || view.biases != frozen.biases {
            return Err(format!("trajectories diverge at round {t}"));
        }
        for i in 0..mask.len() {
            if !mask.get(i) && next.global.values[i] != state.global.values[i] {
                return Err(format!("server changed dormant weight {i} at round {t}"));
            }
        }
        state = next;
    }
    Ok(format!("{rounds} rounds, {clients} clients bit-identical"))
}

fn random_batch(dim: usize, classes: usize, n: usize, rng: &mut ChaCha8Rng) -> Batch {
    let inputs = (0..dim * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    Batch::new(inputs, dim, labels).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Worst relative error of central differences with step `h` over every
/// active weight and every bias; inactive weights must have zero gradient.
pub fn finite_difference_error(
    net: &Network,
    params: &ModelParams,
    mask: &Mask,
    batch: &Batch,
    h: f64,
) -> Result<f64, String> {
    let analytic = net
        .backward(params, mask, batch)
        .map_err(|e| e.to_string())?;
    let loss = |p: &ModelParams| net.forward(p, mask, batch).unwrap().loss;
    let mut worst = 0.0f64;
    for i in 0..params.values.len() {
        if !mask.get(i) {
            if analytic.grad[i] != 0.0 {
                return Err(format!(
                    "inactive weight {i} has gradient {}",
                    analytic.grad[i]
                ));
            }
            continue;
        }
        let (mut plus, mut minus) = (params.clone(), params.clone());
        plus.values[i] += h;
        minus.values[i] -= h;
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
        worst = worst.max(rel_err(fd, analytic.grad[i]));
    }
    for (j, layer) in params.biases.iter().enumerate() {
        for o in 0..layer.len() {
            let (mut plus, mut minus) = (params.clone(), params.clone());
            plus.biases[j][o] += h;
            minus.biases[j][o] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            worst = worst.max(rel_err(fd, analytic.bias_grad[j][o]));
        }
    }
    Ok(worst)
}

pub enum GradNet {
    Linear,
    Conv,
}

/// Finite-difference checks over several random masks and inputs.
pub fn gradient_check(kind: GradNet, trials: u64, tol: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (net, dim, classes) = match kind {
        GradNet::Linear => (
            Network::new(
                6,
                4,
                &Architecture {
                    hidden: vec![7],
                    conv: None,
                },
            )
            .unwrap(),
            6,
            4,
        ),
        GradNet::Conv => {
            let arch = Architecture {
                hidden: vec![5],
                conv: Some(ConvSpec {
                    channels: 2,
                    height: 4,
                    width: 5,
                    filters: 3,
                    kernel: 2,
                }),
            };
            (Network::new(40, 3, &arch).unwrap(), 40, 3)
        }
    };
    let layers = net.layout().num_layers();
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let mut params = net.init_params(trial);
        for b in &mut params.biases {
            for v in b.iter_mut() {
                *v = rng.random_range(-0.2..0.2);
            }
        }
        let density = [0.3, 0.5, 0.8, 1.0, 0.6][trial as usize % 5];
        let mask = init_mask(net.layout().clone(), &vec![density; layers], 100 + trial)
            .map_err(|e| e.to_string())?;
        let e = finite_difference_error(
            &net,
            &params,
            &mask,
            &random_batch(dim, classes, 5, &mut rng),
            1e-5,
        )?;
        if e >= tol {
            return Err(format!("trial {trial}: relative error {e:.3e}"));
        }
        worst = worst.max(e);
    }
    Ok(format!("worst relative error {worst:.2e}"))
}

#[derive(Default)]
struct Recorder {
    starts: Mutex<Vec<(usize, usize, ModelParams)>>,
    updates: Mutex<Vec<(usize, ClientUpdate)>>,
}

impl RoundObserver for Recorder {
    fn distributed(&self, round: usize, client: usize, start: &ModelParams) {
        self.starts
            .lock()
            .unwrap()
            .push((round, client, start.clone()));
    }
    fn client_update(&self, round: usize, update: &ClientUpdate) {
        self.updates.lock().unwrap().push((round, update.clone()));
    }
}

/// Every regrown coordinate, at the client's next distribution, holds the
/// global value of that round and is not zero.
pub fn warm_start(rounds: usize, seed: u64) -> Check {
    let config = super::small_config(6, 3, rounds);
    let fed = super::federation(&config, seed);
    let cfg = super::engine(&config, StrategyKind::DstGradient, seed);
    let rec = Recorder::default();
    let mut state = ServerState::init(&fed.net, &cfg).map_err(|e| e.to_string())?;
    let mut globals = Vec::new();
    while state.round < cfg.rounds {
        globals.push(state.global.clone());
        state = run_round(&state, &fed, &cfg, &rec)
            .map_err(|e| e.to_string())?
            .0;
    }
    let starts = rec.starts.into_inner().unwrap();
    let updates = rec.updates.into_inner().unwrap();
    let mut checked = 0;
    for (t, u) in &updates {
        let next_start = starts
            .iter()
            .filter(|(r, c, _)| r > t && *c == u.client)
            .min_by_key(|(r, _, _)| *r);
        let Some((t2, _, start)) = next_start else {
            continue;
        };
        for i in u
            .next_mask
            .active_indices()
            .filter(|&i| !u.round_mask.get(i))
        {
            let g = globals[*t2].values[i];
            if start.values[i] != g {
                return Err(format!(
                    "client {} coordinate {i}: {} vs global {g}",
                    u.client, start.values[i]
                ));
            }
            if g == 0.0 {
                return Err(format!(
                    "client {} coordinate {i} restarted from zero",
                    u.client
                ));
            }
            checked += 1;
        }
    }
    if checked == 0 {
        return Err("no regrown coordinate was redistributed".into());
    }
    Ok(format!("{checked} regrown coordinates warm-started"))
}
