//! Simulator for sparse personalized federated learning.
//!
//! Every client trains a constantly-sparse subnetwork of one shared dense
//! model. The subnetwork is chosen by a per-client binary [`Mask`] that is
//! either fixed for the whole run (random static masks) or searched with
//! decayed magnitude pruning and gradient regrowth after each round of local
//! training. Dense baselines (FedAvg, local-only training, random-subsampled
//! uploads) run through the same round driver so their ledgers are directly
//! comparable.
//!
//! Module map:
//!
//! * [`sparse`]: layer layouts, packed masks, ERK density allocation, the
//!   cosine prune-rate schedule, and the prune/regrow primitives.
//! * [`model`]: a small hand-differentiated classifier that honours masks.
//! * [`data`]: synthetic and IDX datasets, IID / Dirichlet partitions and
//!   personalized test splits.
//! * [`engine`]: the federated round loop and mask-search strategies.
//! * [`metrics`]: communication and FLOP accounting, evaluation, ledgers.
//! * [`config`] / [`runner`]: JSON experiment configuration, batch runs and
//!   ledger comparison used by the `fedspa` binary.

pub mod config;
pub mod data;
pub mod engine;
mod error;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod runner;
pub mod sparse;

pub use error::{Error, Result};
pub use sparse::{LayerKind, LayerLayout, LayerSpec, Mask};
