//! Federated round loop.
//!
//! A round samples `S` of `K` clients, sends each its masked view
//! `m_k ⊙ w_t`, runs local SGD with that mask held fixed, lets the strategy
//! pick the client's next mask, and applies
//! `w_{t+1} = w_t − (1/S) Σ_k U_k` with `U_k = w̃_{k,0} − w̃_{k,N}`.
//! Client work runs in parallel; the reduction is sequential in ascending
//! client id so results do not depend on scheduling.

mod client;
mod masks;
mod round;
mod state;

pub use crate::config::StrategyKind;
pub use client::{client_local_train, sample_batch, upload_mask, LocalTrainOutput};
pub use masks::{next_masks_dst, next_masks_rsm, Regrow};
pub use round::{
    aggregate_deltas, fedavg_round, local_only_round, run_experiment, run_round,
    sample_participants, subsampling_round, ClientDiagnostics, ClientUpdate, ExperimentOutcome,
    NoObserver, RoundObserver, TrainStats,
};
pub use state::{initial_masks, EngineConfig, Federation, ServerState};
