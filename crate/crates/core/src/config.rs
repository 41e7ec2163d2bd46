//! JSON experiment configuration.
//!
//! Every key is optional; missing keys take the defaults below (100 clients,
//! 10 per round, 5 local epochs, batch 128, learning rate 0.1 decayed by
//! 0.998 per round, weight decay 5e-4, density 0.5, initial prune rate 0.5,
//! ERK scale 1). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::Architecture;
use crate::{Error, Result};

/// Mask-search strategy or baseline driving a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Prune by magnitude, regrow by dense-gradient magnitude.
    DstGradient,
    /// Prune by magnitude, regrow uniformly at random.
    DstRandom,
    /// Random static masks.
    Rsm,
    /// Dense FedAvg.
    FedAvg,
    /// Independent local training, no communication.
    LocalOnly,
    /// Dense training, uploads masked by a fresh random mask each round.
    Subsampling,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::DstGradient => "dst_gradient",
            StrategyKind::DstRandom => "dst_random",
            StrategyKind::Rsm => "rsm",
            StrategyKind::FedAvg => "fed_avg",
            StrategyKind::LocalOnly => "local_only",
            StrategyKind::Subsampling => "subsampling",
        }
    }

    /// Whether clients train a sparse subnetwork.
    pub fn is_sparse(self) -> bool {
        matches!(
            self,
            StrategyKind::DstGradient | StrategyKind::DstRandom | StrategyKind::Rsm
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskInit {
    /// Every client starts from the same mask.
    SameSeed,
    /// Every client draws its own initial mask.
    PerClientSeed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityAllocation {
    Erk,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionConfig {
    Iid,
    Dirichlet { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic {
        num_classes: usize,
        dim: usize,
        train_per_class: usize,
        test_per_class: usize,
        spread: f64,
        #[serde(default)]
        seed: u64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Synthetic {
            num_classes: 10,
            dim: 32,
            train_per_class: 600,
            test_per_class: 100,
            spread: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: Architecture,
    pub num_clients: usize,
    pub clients_per_round: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    /// Fixed local step count; overrides `local_epochs` when set.
    pub local_steps: Option<usize>,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub weight_decay: f64,
    pub density: f64,
    pub alpha0: f64,
    pub erk_scale: f64,
    pub density_allocation: DensityAllocation,
    pub strategy: StrategyKind,
    /// When non-empty, one run per listed strategy, each in its own subdirectory.
    pub sweep: Vec<StrategyKind>,
    /// Fraction of coordinates uploaded per client by `subsampling`.
    pub upload_density: f64,
    pub mask_init: MaskInit,
    pub partition: PartitionConfig,
    pub test_per_client: usize,
    /// Evaluate every this many rounds (the last round is always evaluated).
    pub eval_every: usize,
    /// Compute the gradient-ratio proxy and gradient norms each round.
    pub track_p_proxy: bool,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            model: Architecture::default(),
            num_clients: 100,
            clients_per_round: 10,
            rounds: 1000,
            local_epochs: 5,
            local_steps: None,
            batch_size: 128,
            lr: 0.1,
            lr_decay: 0.998,
            weight_decay: 0.0005,
            density: 0.5,
            alpha0: 0.5,
            erk_scale: 1.0,
            density_allocation: DensityAllocation::Erk,
            strategy: StrategyKind::DstGradient,
            sweep: Vec::new(),
            upload_density: 0.5,
            mask_init: MaskInit::SameSeed,
            partition: PartitionConfig::Dirichlet { gamma: 0.1 },
            test_per_client: 100,
            eval_every: 1,
            track_p_proxy: true,
            seeds: vec![0],
            output_dir: PathBuf::from("runs"),
        }
    }
}

fn in_unit(field: &str, v: f64, open_low: bool) -> Result<()> {
    let ok = v.is_finite() && v <= 1.0 && if open_low { v > 0.0 } else { v >= 0.0 };
    if ok {
        Ok(())
    } else {
        let range = if open_low { "(0, 1]" } else { "[0, 1]" };
        Err(Error::config(
            field,
            format!("must lie in {range}, got {v}"),
        ))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::config("num_clients", "must be >= 1"));
        }
        if self.clients_per_round == 0 || self.clients_per_round > self.num_clients {
            return Err(Error::config(
                "clients_per_round",
                format!(
                    "clients_per_round = {} must lie in [1, num_clients = {}]",
                    self.clients_per_round, self.num_clients
                ),
            ));
        }
        if self.local_epochs == 0 && self.local_steps.is_none() {
            return Err(Error::config("local_epochs", "must be >= 1"));
        }
        if self.local_steps == Some(0) {
            return Err(Error::config("local_steps", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config(
                "lr",
                format!("must be positive, got {}", self.lr),
            ));
        }
        in_unit("lr_decay", self.lr_decay, true)?;
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay", "must be finite and >= 0"));
        }
        in_unit("density", self.density, true)?;
        if !(0.0..1.0).contains(&self.alpha0) {
            return Err(Error::config(
                "alpha0",
                format!("must lie in [0, 1), got {}", self.alpha0),
            ));
        }
        if !(self.erk_scale.is_finite() && self.erk_scale > 0.0) {
            return Err(Error::config("erk_scale", "must be positive"));
        }
        in_unit("upload_density", self.upload_density, true)?;
        if let PartitionConfig::Dirichlet { gamma } = self.partition {
            if !(gamma.is_finite() && gamma > 0.0) {
                return Err(Error::config(
                    "partition.gamma",
                    format!("must be positive, got {gamma}"),
                ));
            }
        }
        if self.test_per_client == 0 {
            return Err(Error::config("test_per_client", "must be >= 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if let DatasetConfig::Synthetic {
            num_classes,
            dim,
            train_per_class,
            test_per_class,
            spread,
            ..
        } = self.dataset
        {
            if num_classes < 2 {
                return Err(Error::config("dataset.num_classes", "must be >= 2"));
            }
            if dim == 0 || train_per_class == 0 || test_per_class == 0 {
                return Err(Error::config(
                    "dataset",
                    "dim and per-class counts must be >= 1",
                ));
            }
            if !(spread.is_finite() && spread >= 0.0) {
                return Err(Error::config("dataset.spread", "must be finite and >= 0"));
            }
        }
        if self.model.hidden.contains(&0) {
            return Err(Error::config("model.hidden", "layer widths must be >= 1"));
        }
        Ok(())
    }

    /// Strategies to run: the sweep list, or the single configured strategy.
    pub fn strategies(&self) -> Vec<StrategyKind> {
        if self.sweep.is_empty() {
            vec![self.strategy]
        } else {
            self.sweep.clone()
        }
    }

    pub fn from_json_str(text: &str, origin: &Path) -> Result<Self> {
        let config: Self = if text.trim().is_empty() {
            Self::default()
        } else {
            serde_json::from_str(text).map_err(|e| Error::Json {
                path: origin.to_path_buf(),
                source: e,
            })?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }
}

/// Reads, parses and validates a config file. An empty file yields the defaults.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json_str(&text, path)
}
