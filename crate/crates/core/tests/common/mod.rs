#![allow(dead_code)]

pub mod oracles;

use fedspa::config::{DatasetConfig, ExperimentConfig, PartitionConfig, StrategyKind};
use fedspa::engine::{EngineConfig, Federation};
use fedspa::model::Architecture;
use fedspa::runner::{build_federation, load_datasets};

/// A small synthetic experiment: 10 classes in 16 dimensions, a 16→24→16→10 net.
pub fn small_config(clients: usize, per_round: usize, rounds: usize) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetConfig::Synthetic {
            num_classes: 10,
            dim: 16,
            train_per_class: 40,
            test_per_class: 30,
            spread: 1.5,
            seed: 7,
        },
        model: Architecture {
            hidden: vec![24, 16],
            conv: None,
        },
        num_clients: clients,
        clients_per_round: per_round,
        rounds,
        local_epochs: 1,
        local_steps: Some(3),
        batch_size: 8,
        test_per_client: 20,
        partition: PartitionConfig::Dirichlet { gamma: 0.5 },
        ..ExperimentConfig::default()
    }
}

pub fn federation(config: &ExperimentConfig, seed: u64) -> Federation {
    let (train, test) = load_datasets(config).unwrap();
    build_federation(config, &train, &test, seed).unwrap()
}

pub fn engine(config: &ExperimentConfig, strategy: StrategyKind, seed: u64) -> EngineConfig {
    EngineConfig::from_experiment(config, strategy, seed)
}
