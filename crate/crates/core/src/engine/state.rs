use std::sync::Arc;

use crate::config::{DensityAllocation, ExperimentConfig, MaskInit, StrategyKind};
use crate::data::{Dataset, Partition};
use crate::model::{ModelParams, Network};
use crate::rng::{self, Purpose};
use crate::sparse::{
    erk_densities, init_mask, uniform_densities, LayerLayout, Mask, PruneSchedule,
};
use crate::{Error, Result};

/// Round-loop knobs for one strategy and one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub strategy: StrategyKind,
    pub num_clients: usize,
    pub clients_per_round: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    pub local_steps: Option<usize>,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub weight_decay: f64,
    pub density: f64,
    pub alpha0: f64,
    pub erk_scale: f64,
    pub density_allocation: DensityAllocation,
    pub upload_density: f64,
    pub mask_init: MaskInit,
    pub eval_every: usize,
    pub track_p_proxy: bool,
    pub seed: u64,
}

impl EngineConfig {
    pub fn from_experiment(config: &ExperimentConfig, strategy: StrategyKind, seed: u64) -> Self {
        Self {
            strategy,
            num_clients: config.num_clients,
            clients_per_round: config.clients_per_round,
            rounds: config.rounds,
            local_epochs: config.local_epochs,
            local_steps: config.local_steps,
            batch_size: config.batch_size,
            lr: config.lr,
            lr_decay: config.lr_decay,
            weight_decay: config.weight_decay,
            density: config.density,
            alpha0: config.alpha0,
            erk_scale: config.erk_scale,
            density_allocation: config.density_allocation,
            upload_density: config.upload_density,
            mask_init: config.mask_init,
            eval_every: config.eval_every,
            track_p_proxy: config.track_p_proxy,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clients_per_round == 0 || self.clients_per_round > self.num_clients {
            return Err(Error::config(
                "clients_per_round",
                format!(
                    "clients_per_round = {} must lie in [1, num_clients = {}]",
                    self.clients_per_round, self.num_clients
                ),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if !(self.upload_density > 0.0 && self.upload_density <= 1.0) {
            return Err(Error::config("upload_density", "must lie in (0, 1]"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be >= 1"));
        }
        Ok(())
    }

    /// Local steps for a shard: the fixed override, else
    /// `ceil(local_epochs · shard_len / batch_size)`.
    pub fn local_steps_for(&self, shard_len: usize) -> usize {
        self.local_steps
            .unwrap_or_else(|| (self.local_epochs * shard_len).div_ceil(self.batch_size))
    }
}

/// Everything a run reads but never mutates.
#[derive(Debug, Clone)]
pub struct Federation {
    pub net: Network,
    pub train: Dataset,
    pub test: Dataset,
    pub partition: Partition,
}

impl Federation {
    pub fn new(net: Network, train: Dataset, test: Dataset, partition: Partition) -> Result<Self> {
        if net.input_dim() != train.dim() || net.input_dim() != test.dim() {
            return Err(Error::config(
                "model",
                "network input width does not match the data",
            ));
        }
        if partition.client_train.len() != partition.client_test.len() {
            return Err(Error::Internal(
                "train and test splits cover different client counts".into(),
            ));
        }
        if let Some(k) = partition.client_train.iter().position(Vec::is_empty) {
            return Err(Error::config(
                "partition",
                format!("client {k} has an empty shard"),
            ));
        }
        Ok(Self {
            net,
            train,
            test,
            partition,
        })
    }

    pub fn num_clients(&self) -> usize {
        self.partition.num_clients()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    /// Dense global weights `w_t`.
    pub global: ModelParams,
    /// `m_{k,t}` for every client; all-ones for dense strategies.
    pub client_masks: Vec<Mask>,
    /// Per-client models, populated only for local-only training.
    pub local_params: Vec<ModelParams>,
    pub round: usize,
    pub schedule: PruneSchedule,
    /// Learning rate for the upcoming round.
    pub lr: f64,
}

/// Initial client masks: one shared draw or one draw per client.
pub fn initial_masks(layout: &Arc<LayerLayout>, config: &EngineConfig) -> Result<Vec<Mask>> {
    let k = config.num_clients;
    if !config.strategy.is_sparse() {
        return Ok(vec![Mask::full(layout.clone()); k]);
    }
    let densities = match config.density_allocation {
        DensityAllocation::Erk => erk_densities(layout, config.density, config.erk_scale)?,
        DensityAllocation::Uniform => uniform_densities(layout, config.density)?,
    };
    match config.mask_init {
        MaskInit::SameSeed => {
            let m = init_mask(layout.clone(), &densities, config.seed)?;
            Ok(vec![m; k])
        }
        MaskInit::PerClientSeed => (0..k)
            .map(|c| {
                let seed = rng::derive_seed(config.seed, Purpose::MaskInit, 0, c as u64 + 1);
                init_mask(layout.clone(), &densities, seed)
            })
            .collect(),
    }
}

impl ServerState {
    pub fn init(net: &Network, config: &EngineConfig) -> Result<Self> {
        config.validate()?;
        let global = net.init_params(config.seed);
        let client_masks = initial_masks(net.layout(), config)?;
        let local_params = if config.strategy == StrategyKind::LocalOnly {
            vec![global.clone(); config.num_clients]
        } else {
            Vec::new()
        };
        Ok(Self {
            global,
            client_masks,
            local_params,
            round: 0,
            schedule: PruneSchedule::new(config.alpha0, config.rounds)?,
            lr: config.lr,
        })
    }

    /// Prune fraction for the current round; zero for runs shorter than two rounds.
    pub fn alpha(&self) -> Result<f64> {
        if self.schedule.total_rounds() < 2 {
            Ok(0.0)
        } else {
            self.schedule.alpha(self.round)
        }
    }

    /// The weights client `k` starts the current round from.
    pub fn client_view(&self, k: usize) -> Result<ModelParams> {
        match self.local_params.get(k) {
            Some(p) => Ok(p.clone()),
            None => self.global.masked(&self.client_masks[k]),
        }
    }
}
