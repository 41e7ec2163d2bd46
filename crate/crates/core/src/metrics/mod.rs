//! Communication and FLOP accounting, evaluation, mask churn and the
//! surrogate-mask gradient ratio diagnostic.

mod comm;
mod diagnostics;
mod eval;
mod ledger;

pub use comm::{
    comm_bytes, comm_bytes_for_density, mask_overhead_bytes, Direction, BYTES_PER_VALUE,
};
pub use diagnostics::{mask_churn, masked_ratio, p_proxy, P_PROXY_TOLERANCE};
pub use eval::{accuracy, evaluate_global, evaluate_personalized, PersonalizedAccuracy};
pub use ledger::{read_ledger_csv, write_ledger_csv, write_ledger_jsonl, LedgerRow, RoundLedger};
