//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Runs as a plain binary (`harness = false`) so the lines are always printed.

mod common;

use std::time::Instant;

use common::oracles::{self, Check, GradNet};
use fedspa::config::{DatasetConfig, ExperimentConfig, PartitionConfig, StrategyKind};
use fedspa::engine::{run_experiment, run_round, upload_mask, NoObserver, ServerState};
use fedspa::model::Architecture;
use fedspa::rng::{self, Purpose};
use fedspa::sparse::{erk_densities, init_mask, PruneSchedule};
use fedspa::{LayerKind, LayerLayout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn err(e: fedspa::Error) -> String {
    e.to_string()
}

fn comm_ratio() -> Check {
    let config = common::small_config(10, 4, 8);
    let fed = common::federation(&config, 0);
    if !fed.net.layout().total().is_multiple_of(2) {
        return Err("layout has an odd parameter count".into());
    }
    let sparse = run_experiment(
        &fed,
        &common::engine(&config, StrategyKind::DstGradient, 0),
        &NoObserver,
    )
    .map_err(err)?;
    let dense = run_experiment(
        &fed,
        &common::engine(&config, StrategyKind::FedAvg, 0),
        &NoObserver,
    )
    .map_err(err)?;
    let total = |o: &fedspa::engine::ExperimentOutcome| {
        o.ledgers
            .iter()
            .map(|l| l.bytes_up + l.bytes_down)
            .sum::<u64>()
    };
    let (s, d) = (total(&sparse), total(&dense));
    if 2 * s == d {
        Ok(format!("{s} / {d} = {:.4}", s as f64 / d as f64))
    } else {
        Err(format!("{s} / {d} = {}", s as f64 / d as f64))
    }
}

fn sparsity_conservation() -> Check {
    let rounds = 200;
    let config = common::small_config(10, 5, rounds);
    let fed = common::federation(&config, 1);
    let cfg = common::engine(&config, StrategyKind::DstGradient, 1);
    let mut state = ServerState::init(&fed.net, &cfg).map_err(err)?;
    let initial: Vec<Vec<usize>> = state
        .client_masks
        .iter()
        .map(|m| m.active_per_layer().to_vec())
        .collect();
    let mut churn = 0;
    for t in 0..rounds {
        let (next, ledger) = run_round(&state, &fed, &cfg, &NoObserver).map_err(err)?;
        churn += ledger.mask_churn.iter().sum::<usize>();
        for (k, m) in next.client_masks.iter().enumerate() {
            // Recount from the raw bits rather than trusting the cached counts.
            let recount: Vec<usize> = (0..fed.net.layout().num_layers())
                .map(|j| m.active_in_layer(j).count())
                .collect();
            if recount != initial[k] {
                return Err(format!(
                    "round {t} client {k}: {recount:?} vs {:?}",
                    initial[k]
                ));
            }
        }
        state = next;
    }
    if churn == 0 {
        return Err("masks never changed".into());
    }
    Ok(format!("{rounds} rounds, 10 clients, {churn} bits moved"))
}

fn cosine_schedule() -> Check {
    for (alpha0, total) in [(0.5, 1001), (0.3, 11), (0.5, 2), (0.9, 151)] {
        let s = PruneSchedule::new(alpha0, total).map_err(err)?;
        let a = |t| s.alpha(t).unwrap();
        if a(0) != alpha0 || a(total - 1) != 0.0 {
            return Err(format!("endpoints wrong for T={total}"));
        }
        if total % 2 == 1 && a((total - 1) / 2) != alpha0 / 2.0 {
            return Err(format!("midpoint {} for T={total}", a((total - 1) / 2)));
        }
        if (1..total).any(|t| a(t) > a(t - 1)) {
            return Err(format!("schedule increases for T={total}"));
        }
    }
    Ok("endpoints, midpoint and monotonicity exact".into())
}

fn erk_allocation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..10 {
        let n = rng.random_range(2..7);
        let mut kinds = Vec::new();
        if rng.random_bool(0.5) {
            kinds.push(LayerKind::Conv {
                in_channels: rng.random_range(1..4),
                out_channels: rng.random_range(2..9),
                kernel_h: 3,
                kernel_w: 3,
                positions: rng.random_range(4..50),
            });
        }
        for _ in 0..n {
            kinds.push(LayerKind::Linear {
                inputs: rng.random_range(1..300),
                outputs: rng.random_range(1..300),
            });
        }
        let layout = Arc::new(LayerLayout::new(kinds).map_err(err)?);
        let target = rng.random_range(0.05..0.95);
        let d = erk_densities(&layout, target, 1.0).map_err(err)?;
        let budget = (target * layout.total() as f64).round() as usize;
        let realized: usize = d
            .iter()
            .zip(layout.layers())
            .map(|(d, l)| (d * l.count as f64).round() as usize)
            .sum();
        if realized != budget || d.iter().any(|&x| x > 1.0) {
            return Err(format!(
                "trial {trial}: {realized} vs budget {budget}, densities {d:?}"
            ));
        }
        let mask = init_mask(layout.clone(), &d, trial).map_err(err)?;
        if mask.total_active() != budget {
            return Err(format!(
                "trial {trial}: mask holds {} of {budget}",
                mask.total_active()
            ));
        }
    }
    Ok("10 layouts hit their budgets exactly".into())
}

fn subsampling_unbiased() -> Check {
    let layout = Arc::new(LayerLayout::linear(&[(5, 10)]).map_err(err)?);
    let d = layout.total();
    let (rho, draws) = (0.3, 1000);
    let delta: Vec<f64> = (0..d).map(|i| ((i as f64) * 0.37).sin() + 0.1).collect();
    let mut mean = vec![0.0; d];
    for r in 0..draws {
        let mut rng = rng::stream(21, Purpose::UploadMask, r, 0);
        for i in upload_mask(&layout, rho, &mut rng)
            .map_err(err)?
            .active_indices()
        {
            mean[i] += delta[i] / draws as f64;
        }
    }
    let mut worst = 0.0f64;
    for i in 0..d {
        let sigma = delta[i].abs() * (rho * (1.0 - rho) / draws as f64).sqrt();
        let z = (mean[i] - rho * delta[i]).abs() / sigma;
        if z > 3.0 {
            return Err(format!("coordinate {i} is {z:.2}σ off"));
        }
        worst = worst.max(z);
    }
    Ok(format!("{d} coordinates, worst {worst:.2}σ"))
}

fn p_proxy_bounds() -> Check {
    let config = common::small_config(8, 4, 40);
    let fed = common::federation(&config, 3);
    let sparse = run_experiment(
        &fed,
        &common::engine(&config, StrategyKind::DstGradient, 3),
        &NoObserver,
    )
    .map_err(err)?;
    let mut seen = 0;
    for l in &sparse.ledgers {
        if l.p_proxy.len() != l.participants.len() {
            return Err(format!(
                "round {} logged {} values",
                l.round,
                l.p_proxy.len()
            ));
        }
        for p in l.p_proxy.iter().flatten() {
            if !(0.0..=1.0).contains(p) {
                return Err(format!("round {}: p_proxy {p}", l.round));
            }
            seen += 1;
        }
    }
    let dense = run_experiment(
        &fed,
        &common::engine(&config, StrategyKind::FedAvg, 3),
        &NoObserver,
    )
    .map_err(err)?;
    for l in &dense.ledgers {
        if l.p_proxy.iter().any(|p| *p != Some(1.0)) {
            return Err(format!(
                "round {}: all-ones mask gave {:?}",
                l.round, l.p_proxy
            ));
        }
    }
    Ok(format!(
        "{seen} sparse values in [0, 1]; all-ones mask exactly 1"
    ))
}

/// The desk-scale benchmark: 10 well-overlapping Gaussian classes in 32 dimensions.
fn benchmark_config(partition: PartitionConfig) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetConfig::Synthetic {
            num_classes: 10,
            dim: 32,
            train_per_class: 300,
            test_per_class: 300,
            spread: 2.0,
            seed: 0,
        },
        model: Architecture {
            hidden: vec![64, 32],
            conv: None,
        },
        num_clients: 20,
        clients_per_round: 5,
        rounds: 150,
        local_epochs: 2,
        batch_size: 32,
        density: 0.5,
        partition,
        eval_every: 150,
        track_p_proxy: false,
        seeds: vec![0, 1, 2],
        ..ExperimentConfig::default()
    }
}

/// Mean over seeds of the final mean per-client accuracy on personalized test splits.
fn final_accuracy(
    config: &ExperimentConfig,
    strategy: StrategyKind,
) -> Result<(f64, Vec<f64>), String> {
    let mut accs = Vec::new();
    for &seed in &config.seeds {
        let out = fedspa::runner::run_single(config, strategy, seed).map_err(err)?;
        let acc = out
            .ledgers
            .last()
            .and_then(|l| l.mean_personalized_acc)
            .ok_or("final round was not evaluated")?;
        accs.push(acc);
    }
    Ok((accs.iter().sum::<f64>() / accs.len() as f64, accs))
}

fn fmt_accs(v: &[f64]) -> String {
    v.iter()
        .map(|a| format!("{:.3}", a))
        .collect::<Vec<_>>()
        .join("/")
}

fn non_iid_benefit() -> Check {
    let config = benchmark_config(PartitionConfig::Dirichlet { gamma: 0.1 });
    let (dst, dst_s) = final_accuracy(&config, StrategyKind::DstGradient)?;
    let (avg, avg_s) = final_accuracy(&config, StrategyKind::FedAvg)?;
    let (rsm, rsm_s) = final_accuracy(&config, StrategyKind::Rsm)?;
    let detail = format!(
        "DST {dst:.3} ({}), FedAvg {avg:.3} ({}), RSM {rsm:.3} ({})",
        fmt_accs(&dst_s),
        fmt_accs(&avg_s),
        fmt_accs(&rsm_s)
    );
    if dst - avg >= 0.05 && rsm - avg < 0.05 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn iid_reversal() -> Check {
    let config = benchmark_config(PartitionConfig::Iid);
    let (dst, dst_s) = final_accuracy(&config, StrategyKind::DstGradient)?;
    let (avg, avg_s) = final_accuracy(&config, StrategyKind::FedAvg)?;
    let detail = format!(
        "FedAvg {avg:.3} ({}), DST {dst:.3} ({})",
        fmt_accs(&avg_s),
        fmt_accs(&dst_s)
    );
    if avg >= dst - 0.02 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

type Criterion = (&'static str, Box<dyn Fn() -> Check>);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("1 communication ratio at density 0.5", Box::new(comm_ratio)),
        (
            "2 sparsity conservation over 200 DST rounds",
            Box::new(sparsity_conservation),
        ),
        (
            "3 shared-mask RSM equals frozen-subnetwork FedAvg",
            Box::new(|| oracles::rsm_matches_frozen_fedavg(20, 6, 20, 11)),
        ),
        (
            "4 local-update replay and server aggregation",
            Box::new(|| {
                let a = oracles::five_step_replay(1)?;
                let b = oracles::server_round_brute_force(2, 3)?;
                Ok(format!("{a}; {b}"))
            }),
        ),
        (
            "5 masked gradients vs finite differences",
            Box::new(|| {
                let a = oracles::gradient_check(GradNet::Linear, 10, 1e-4)?;
                let b = oracles::gradient_check(GradNet::Conv, 3, 1e-4)?;
                Ok(format!("linear {a}; conv {b}"))
            }),
        ),
        ("6 cosine prune schedule", Box::new(cosine_schedule)),
        (
            "7 ERK allocation meets the budget",
            Box::new(erk_allocation),
        ),
        (
            "8 warm start of regrown weights",
            Box::new(|| oracles::warm_start(50, 8)),
        ),
        (
            "9 non-IID benefit of DST over FedAvg",
            Box::new(non_iid_benefit),
        ),
        (
            "10 IID: FedAvg within 2 points of DST",
            Box::new(iid_reversal),
        ),
        (
            "11 subsampled uploads are unbiased",
            Box::new(subsampling_unbiased),
        ),
        ("12 p_proxy bounds", Box::new(p_proxy_bounds)),
    ];
    let mut failed = 0;
    let start = Instant::now();
    for (name, check) in &criteria {
        let t = Instant::now();
        let (tag, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "{tag} criterion {name}: {detail} [{:.1}s]",
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.1}s",
        criteria.len() - failed,
        criteria.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
