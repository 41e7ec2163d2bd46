//! Per-round ledgers.
//!
//! JSON-lines output carries every [`RoundLedger`] field, including the
//! per-participant vectors. CSV output has one [`LedgerRow`] per round with
//! this fixed column order:
//!
//! ```text
//! round,participants,lr,alpha,bytes_up,bytes_down,mask_overhead_bytes,
//! bias_bytes,flops_train,flops_masksearch,train_loss,mean_personalized_acc,
//! global_acc,mask_churn_total,p_proxy_mean,p_proxy_max,grad_norm_sq
//! ```
//!
//! Accuracy and proxy columns are empty when not measured that round.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLedger {
    /// Zero-based index of the round this record describes.
    pub round: usize,
    pub participants: Vec<usize>,
    pub lr: f64,
    pub alpha: f64,
    /// Headline traffic: parameter values only.
    pub bytes_up: u64,
    pub bytes_down: u64,
    /// Bitmaps describing sparse supports, excluded from the headline.
    pub mask_overhead_bytes: u64,
    /// Dense bias traffic, excluded from the headline.
    pub bias_bytes: u64,
    pub flops_train: u64,
    pub flops_masksearch: u64,
    pub train_loss: f64,
    pub mean_personalized_acc: Option<f64>,
    pub global_acc: Option<f64>,
    /// Changed mask bits per participant, in `participants` order.
    pub mask_churn: Vec<usize>,
    pub p_proxy: Vec<Option<f64>>,
    /// Mean over participants of `‖m ⊙ ∇F_k(m ⊙ w_t)‖²` on the full shard.
    pub grad_norm_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub round: usize,
    pub participants: usize,
    pub lr: f64,
    pub alpha: f64,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub mask_overhead_bytes: u64,
    pub bias_bytes: u64,
    pub flops_train: u64,
    pub flops_masksearch: u64,
    pub train_loss: f64,
    pub mean_personalized_acc: Option<f64>,
    pub global_acc: Option<f64>,
    pub mask_churn_total: usize,
    pub p_proxy_mean: Option<f64>,
    pub p_proxy_max: Option<f64>,
    pub grad_norm_sq: Option<f64>,
}

impl From<&RoundLedger> for LedgerRow {
    fn from(l: &RoundLedger) -> Self {
        let defined: Vec<f64> = l.p_proxy.iter().flatten().copied().collect();
        let p_proxy_mean =
            (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        let p_proxy_max = defined.iter().copied().reduce(f64::max);
        Self {
            round: l.round,
            participants: l.participants.len(),
            lr: l.lr,
            alpha: l.alpha,
            bytes_up: l.bytes_up,
            bytes_down: l.bytes_down,
            mask_overhead_bytes: l.mask_overhead_bytes,
            bias_bytes: l.bias_bytes,
            flops_train: l.flops_train,
            flops_masksearch: l.flops_masksearch,
            train_loss: l.train_loss,
            mean_personalized_acc: l.mean_personalized_acc,
            global_acc: l.global_acc,
            mask_churn_total: l.mask_churn.iter().sum(),
            p_proxy_mean,
            p_proxy_max,
            grad_norm_sq: l.grad_norm_sq,
        }
    }
}

pub fn write_ledger_csv(path: &Path, ledgers: &[RoundLedger]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    if ledgers.is_empty() {
        // csv only emits headers alongside the first record.
        w.write_record(CSV_COLUMNS).map_err(|e| csv_err(path, e))?;
    }
    for l in ledgers {
        w.serialize(LedgerRow::from(l))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const CSV_COLUMNS: [&str; 17] = [
    "round",
    "participants",
    "lr",
    "alpha",
    "bytes_up",
    "bytes_down",
    "mask_overhead_bytes",
    "bias_bytes",
    "flops_train",
    "flops_masksearch",
    "train_loss",
    "mean_personalized_acc",
    "global_acc",
    "mask_churn_total",
    "p_proxy_mean",
    "p_proxy_max",
    "grad_norm_sq",
];

pub fn read_ledger_csv(path: &Path) -> Result<Vec<LedgerRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(Error::Format {
            what: "ledger",
            message: format!("{}: unexpected columns {:?}", path.display(), headers),
        });
    }
    r.deserialize()
        .collect::<std::result::Result<Vec<LedgerRow>, _>>()
        .map_err(|e| csv_err(path, e))
}

pub fn write_ledger_jsonl(path: &Path, ledgers: &[RoundLedger]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for l in ledgers {
        serde_json::to_writer(&mut out, l).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        what: "ledger",
        message: format!("{}: {e}", path.display()),
    }
}
