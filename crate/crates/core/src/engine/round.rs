use rayon::prelude::*;

use super::client::{client_local_train, upload_mask, LocalTrainOutput};
use super::masks::{next_masks_dst, next_masks_rsm, Regrow};
use super::state::{EngineConfig, Federation, ServerState};
use crate::config::StrategyKind;
use crate::metrics::{
    evaluate_global, evaluate_personalized, mask_churn, mask_overhead_bytes, masked_ratio,
    RoundLedger, BYTES_PER_VALUE,
};
use crate::model::ModelParams;
use crate::rng::{self, Purpose};
use crate::sparse::Mask;
use crate::{Error, Result};

/// Hooks into a round, called from worker threads.
pub trait RoundObserver: Sync {
    /// Client `client` is about to train from `start`.
    fn distributed(&self, _round: usize, _client: usize, _start: &ModelParams) {}
    fn client_update(&self, _round: usize, _update: &ClientUpdate) {}
}

pub struct NoObserver;

impl RoundObserver for NoObserver {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub steps: usize,
    pub mean_loss: f64,
    pub mean_accuracy: f64,
    pub flops_train: u64,
    pub flops_masksearch: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientDiagnostics {
    pub p_proxy: Option<f64>,
    pub grad_norm_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client: usize,
    /// Uploaded update; zero outside the round mask (and outside the upload
    /// mask for subsampling).
    pub delta: Vec<f64>,
    pub bias_delta: Vec<Vec<f64>>,
    /// Mask the client trained with this round.
    pub round_mask: Mask,
    /// Support of `delta` as transmitted.
    pub upload_support: Mask,
    pub next_mask: Mask,
    pub stats: TrainStats,
    pub diagnostics: Option<ClientDiagnostics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub ledgers: Vec<RoundLedger>,
    pub state: ServerState,
}

/// `S` distinct client ids drawn uniformly for `round`, ascending.
pub fn sample_participants(
    seed: u64,
    round: usize,
    num_clients: usize,
    per_round: usize,
) -> Result<Vec<usize>> {
    if per_round == 0 || per_round > num_clients {
        return Err(Error::config(
            "clients_per_round",
            format!("clients_per_round = {per_round} must lie in [1, num_clients = {num_clients}]"),
        ));
    }
    let mut rng = rng::stream(seed, Purpose::Participants, round as u64, 0);
    let mut ids = rand::seq::index::sample(&mut rng, num_clients, per_round).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

struct ClientOutcome {
    update: ClientUpdate,
    end: ModelParams,
}

fn client_round(
    state: &ServerState,
    fed: &Federation,
    cfg: &EngineConfig,
    k: usize,
    alpha: f64,
    observer: &dyn RoundObserver,
) -> Result<ClientOutcome> {
    let t = state.round;
    let net = &fed.net;
    let shard = &fed.partition.client_train[k];
    let round_mask = state.client_masks[k].clone();
    let start = state.client_view(k)?;
    observer.distributed(t, k, &start);

    let steps = cfg.local_steps_for(shard.len());
    let mut batches = rng::stream(cfg.seed, Purpose::LocalBatches, t as u64, k as u64);
    let LocalTrainOutput {
        end,
        mut delta,
        bias_delta,
        mean_loss,
        mean_accuracy,
        flops,
        ..
    } = client_local_train(
        net,
        &start,
        &round_mask,
        &fed.train,
        shard,
        steps,
        state.lr,
        cfg.weight_decay,
        cfg.batch_size,
        &mut batches,
    )?;

    let mut search = rng::stream(cfg.seed, Purpose::MaskSearch, t as u64, k as u64);
    let (next_mask, flops_masksearch) = match cfg.strategy {
        StrategyKind::DstGradient | StrategyKind::DstRandom => {
            let regrow = if cfg.strategy == StrategyKind::DstGradient {
                Regrow::Gradient
            } else {
                Regrow::Random
            };
            next_masks_dst(
                net,
                &end,
                &round_mask,
                alpha,
                &fed.train,
                shard,
                cfg.batch_size,
                regrow,
                &mut search,
            )?
        }
        _ => (next_masks_rsm(&round_mask), 0),
    };
    if next_mask.active_per_layer() != round_mask.active_per_layer() {
        return Err(Error::Internal(format!(
            "client {k}: mask search changed the sparse volume"
        )));
    }

    let upload_support = if cfg.strategy == StrategyKind::Subsampling {
        let mut rng = rng::stream(cfg.seed, Purpose::UploadMask, t as u64, k as u64);
        let m = upload_mask(net.layout(), cfg.upload_density, &mut rng)?;
        for (i, d) in delta.iter_mut().enumerate() {
            if !m.get(i) {
                *d = 0.0;
            }
        }
        m
    } else {
        round_mask.clone()
    };

    let diagnostics = if cfg.track_p_proxy {
        let full = Mask::full(net.layout().clone());
        let batch = fed.train.batch(shard);
        let at_end = net.backward(&end, &full, &batch)?;
        let at_start = net.backward(&start, &full, &batch)?;
        let grad_norm_sq = round_mask
            .active_indices()
            .map(|i| at_start.grad[i].powi(2))
            .sum();
        Some(ClientDiagnostics {
            p_proxy: masked_ratio(&round_mask, &at_end.grad, &at_start.grad),
            grad_norm_sq,
        })
    } else {
        None
    };

    let update = ClientUpdate {
        client: k,
        delta,
        bias_delta,
        round_mask,
        upload_support,
        next_mask,
        stats: TrainStats {
            steps,
            mean_loss,
            mean_accuracy,
            flops_train: flops,
            flops_masksearch,
        },
        diagnostics,
    };
    observer.client_update(t, &update);
    Ok(ClientOutcome { update, end })
}

fn check_support(update: &ClientUpdate) -> Result<()> {
    let outside =
        update.delta.iter().enumerate().find(|&(i, &d)| {
            d != 0.0 && !(update.round_mask.get(i) && update.upload_support.get(i))
        });
    match outside {
        Some((i, d)) => Err(Error::Internal(format!(
            "client {}: update {d} at coordinate {i} lies outside its mask",
            update.client
        ))),
        None => Ok(()),
    }
}

fn participants_for(
    state: &ServerState,
    cfg: &EngineConfig,
    fed: &Federation,
) -> Result<Vec<usize>> {
    cfg.validate()?;
    if state.round >= cfg.rounds {
        return Err(Error::Argument(format!(
            "round {} is past the configured {} rounds",
            state.round, cfg.rounds
        )));
    }
    if fed.num_clients() != cfg.num_clients || state.client_masks.len() != cfg.num_clients {
        return Err(Error::config(
            "num_clients",
            format!(
                "{} configured clients but the partition has {}",
                cfg.num_clients,
                fed.num_clients()
            ),
        ));
    }
    sample_participants(
        cfg.seed,
        state.round,
        cfg.num_clients,
        cfg.clients_per_round,
    )
}

fn run_clients(
    state: &ServerState,
    fed: &Federation,
    cfg: &EngineConfig,
    participants: &[usize],
    alpha: f64,
    observer: &dyn RoundObserver,
) -> Result<Vec<ClientOutcome>> {
    participants
        .par_iter()
        .map(|&k| client_round(state, fed, cfg, k, alpha, observer))
        .collect()
}

fn base_ledger(
    state: &ServerState,
    participants: &[usize],
    alpha: f64,
    outcomes: &[ClientOutcome],
) -> RoundLedger {
    let n = outcomes.len().max(1) as f64;
    let diags: Vec<_> = outcomes
        .iter()
        .filter_map(|o| o.update.diagnostics)
        .collect();
    RoundLedger {
        round: state.round,
        participants: participants.to_vec(),
        lr: state.lr,
        alpha,
        bytes_up: 0,
        bytes_down: 0,
        mask_overhead_bytes: 0,
        bias_bytes: 0,
        flops_train: outcomes.iter().map(|o| o.update.stats.flops_train).sum(),
        flops_masksearch: outcomes
            .iter()
            .map(|o| o.update.stats.flops_masksearch)
            .sum(),
        train_loss: outcomes
            .iter()
            .map(|o| o.update.stats.mean_loss)
            .sum::<f64>()
            / n,
        mean_personalized_acc: None,
        global_acc: None,
        mask_churn: vec![0; outcomes.len()],
        p_proxy: diags.iter().map(|d| d.p_proxy).collect(),
        grad_norm_sq: (!diags.is_empty())
            .then(|| diags.iter().map(|d| d.grad_norm_sq).sum::<f64>() / diags.len() as f64),
    }
}

fn should_evaluate(cfg: &EngineConfig, finished_round: usize) -> bool {
    (finished_round + 1).is_multiple_of(cfg.eval_every) || finished_round + 1 == cfg.rounds
}

fn evaluate(state: &ServerState, fed: &Federation, ledger: &mut RoundLedger) -> Result<()> {
    let net = &fed.net;
    let tests = &fed.partition.client_test;
    if state.local_params.is_empty() {
        let p = evaluate_personalized(net, &state.global, &state.client_masks, &fed.test, tests)?;
        ledger.mean_personalized_acc = Some(p.mean);
        ledger.global_acc = Some(evaluate_global(net, &state.global, &fed.test)?);
    } else {
        let full = Mask::full(net.layout().clone());
        let accs = state
            .local_params
            .iter()
            .zip(tests)
            .map(|(p, idx)| crate::metrics::accuracy(net, p, &full, &fed.test, idx))
            .collect::<Result<Vec<_>>>()?;
        ledger.mean_personalized_acc = Some(accs.iter().sum::<f64>() / accs.len() as f64);
    }
    Ok(())
}

/// One communicating round: sparse (DST/RSM), dense FedAvg or subsampled uploads.
fn aggregate_round(
    state: &ServerState,
    fed: &Federation,
    cfg: &EngineConfig,
    observer: &dyn RoundObserver,
) -> Result<(ServerState, RoundLedger)> {
    let participants = participants_for(state, cfg, fed)?;
    let alpha = match cfg.strategy {
        StrategyKind::DstGradient | StrategyKind::DstRandom => state.alpha()?,
        _ => 0.0,
    };
    if !cfg.strategy.is_sparse()
        && state
            .client_masks
            .iter()
            .any(|m| m.total_active() != m.len())
    {
        return Err(Error::Internal(
            "dense strategy given sparse client masks".into(),
        ));
    }
    let outcomes = run_clients(state, fed, cfg, &participants, alpha, observer)?;

    for o in &outcomes {
        check_support(&o.update)?;
    }
    let d = state.global.values.len();
    let mut next = state.clone();
    let deltas: Vec<&[f64]> = outcomes.iter().map(|o| o.update.delta.as_slice()).collect();
    next.global.values = aggregate_deltas(&state.global.values, &deltas)?;
    for (j, b) in next.global.biases.iter_mut().enumerate() {
        let layer: Vec<&[f64]> = outcomes
            .iter()
            .map(|o| o.update.bias_delta[j].as_slice())
            .collect();
        *b = aggregate_deltas(b, &layer)?;
    }
    next.global.check_finite()?;

    let mut ledger = base_ledger(state, &participants, alpha, &outcomes);
    let per_client_bias = state.global.bias_count() as u64 * BYTES_PER_VALUE;
    for (i, o) in outcomes.iter().enumerate() {
        let u = &o.update;
        ledger.mask_churn[i] = mask_churn(&u.round_mask, &u.next_mask)?;
        ledger.bytes_down += u.round_mask.total_active() as u64 * BYTES_PER_VALUE;
        ledger.bytes_up += u.upload_support.total_active() as u64 * BYTES_PER_VALUE;
        ledger.bias_bytes += 2 * per_client_bias;
        if matches!(
            cfg.strategy,
            StrategyKind::DstGradient | StrategyKind::DstRandom | StrategyKind::Subsampling
        ) {
            ledger.mask_overhead_bytes += mask_overhead_bytes(d);
        }
    }
    for o in outcomes {
        next.client_masks[o.update.client] = o.update.next_mask;
    }
    next.round += 1;
    next.lr = state.lr * cfg.lr_decay;
    if should_evaluate(cfg, state.round) {
        evaluate(&next, fed, &mut ledger)?;
    }
    Ok((next, ledger))
}

/// `w − (1/S) Σ_k U_k`, summing the updates in the order given.
pub fn aggregate_deltas(w: &[f64], deltas: &[&[f64]]) -> Result<Vec<f64>> {
    if deltas.is_empty() {
        return Err(Error::Argument("no client updates to aggregate".into()));
    }
    if let Some(bad) = deltas.iter().find(|u| u.len() != w.len()) {
        return Err(Error::Argument(format!(
            "update of length {} for {} weights",
            bad.len(),
            w.len()
        )));
    }
    let mut sum = vec![0.0; w.len()];
    for u in deltas {
        for (s, x) in sum.iter_mut().zip(u.iter()) {
            *s += x;
        }
    }
    let s = deltas.len() as f64;
    Ok(w.iter().zip(&sum).map(|(w, g)| w - g / s).collect())
}

/// Runs one round of the configured strategy.
pub fn run_round(
    state: &ServerState,
    fed: &Federation,
    cfg: &EngineConfig,
    observer: &dyn RoundObserver,
) -> Result<(ServerState, RoundLedger)> {
    match cfg.strategy {
        StrategyKind::FedAvg => fedavg_round(state, fed, cfg, observer),
        StrategyKind::LocalOnly => local_only_round(state, fed, cfg, observer),
        StrategyKind::Subsampling => subsampling_round(state, fed, cfg, observer),
        _ => aggregate_round(state, fed, cfg, observer),
    }
}

fn expect_strategy(cfg: &EngineConfig, expected: StrategyKind) -> Result<()> {
    if cfg.strategy == expected {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "{} round called with strategy {}",
            expected.name(),
            cfg.strategy.name()
        )))
    }
}

/// Dense FedAvg: all-ones masks, no mask search.
pub fn fedavg_round(
    state: &ServerState,
    fed: &Federation,
    cfg: &EngineConfig,
    observer: &dyn RoundObserver,
) -> Result<(ServerState, RoundLedger)> {
    expect_strategy(cfg, StrategyKind::FedAvg)?;
    aggregate_round(state, fed, cfg, observer)
}

/// Dense local training with each upload restricted to a fresh random
/// support of `upload_density · d` coordinates; the download stays dense.
pub fn subsampling_round(
    state: &ServerState,
    fed: &Federation,
    cfg: &EngineConfig,
    observer: &dyn RoundObserver,
) -> Result<(ServerState, RoundLedger)> {
    expect_strategy(cfg, StrategyKind::Subsampling)?;
    aggregate_round(state, fed, cfg, observer)
}

/// Sampled clients train their own models; nothing is exchanged.
pub fn local_only_round(
    state: &ServerState,
    fed: &Federation,
    cfg: &EngineConfig,
    observer: &dyn RoundObserver,
) -> Result<(ServerState, RoundLedger)> {
    expect_strategy(cfg, StrategyKind::LocalOnly)?;
    if state.local_params.len() != cfg.num_clients {
        return Err(Error::Internal(
            "local-only state needs one model per client".into(),
        ));
    }
    let participants = participants_for(state, cfg, fed)?;
    let outcomes = run_clients(state, fed, cfg, &participants, 0.0, observer)?;
    let mut ledger = base_ledger(state, &participants, 0.0, &outcomes);
    let mut next = state.clone();
    for o in outcomes {
        next.local_params[o.update.client] = o.end;
    }
    next.round += 1;
    next.lr = state.lr * cfg.lr_decay;
    if should_evaluate(cfg, state.round) {
        evaluate(&next, fed, &mut ledger)?;
    }
    Ok((next, ledger))
}

/// Runs all configured rounds from a fresh state.
pub fn run_experiment(
    fed: &Federation,
    cfg: &EngineConfig,
    observer: &dyn RoundObserver,
) -> Result<ExperimentOutcome> {
    let mut state = ServerState::init(&fed.net, cfg)?;
    let mut ledgers = Vec::with_capacity(cfg.rounds);
    while state.round < cfg.rounds {
        let (next, ledger) = run_round(&state, fed, cfg, observer)?;
        log::debug!(
            "{} seed {} round {}: loss {:.4}",
            cfg.strategy.name(),
            cfg.seed,
            ledger.round,
            ledger.train_loss
        );
        ledgers.push(ledger);
        state = next;
    }
    Ok(ExperimentOutcome { ledgers, state })
}
