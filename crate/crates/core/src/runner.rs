//! Batch runs, artifact output and ledger comparison behind the `fedspa` binary.
//!
//! A run writes, under the output root (`output_dir`, or `$FEDSPA_OUTPUT_ROOT`
//! when set):
//!
//! ```text
//! config.json                       resolved configuration
//! [<strategy>/]summary.json         final accuracies, mean and std over seeds
//! [<strategy>/]seed_<s>/ledger.csv
//! [<strategy>/]seed_<s>/ledger.jsonl
//! [<strategy>/]seed_<s>/global.bin, global.json
//! [<strategy>/]seed_<s>/masks/client_<k>.mask
//! ```
//!
//! The `<strategy>/` level appears only for sweeps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{DatasetConfig, ExperimentConfig, PartitionConfig, StrategyKind};
use crate::data::{
    dirichlet_partition, iid_partition, load_idx, personalized_test_split, synth_train_test,
    Dataset, Partition,
};
use crate::engine::{run_experiment, EngineConfig, ExperimentOutcome, Federation, NoObserver};
use crate::metrics::{
    read_ledger_csv, write_ledger_csv, write_ledger_jsonl, LedgerRow, RoundLedger,
};
use crate::model::{save_checkpoint, Network};
use crate::sparse::MaskBlob;
use crate::{Error, Result};

pub const OUTPUT_ROOT_ENV: &str = "FEDSPA_OUTPUT_ROOT";

pub fn load_datasets(config: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    match &config.dataset {
        DatasetConfig::Synthetic {
            num_classes,
            dim,
            train_per_class,
            test_per_class,
            spread,
            seed,
        } => synth_train_test(
            *num_classes,
            *dim,
            *train_per_class,
            *test_per_class,
            *spread,
            *seed,
        ),
        DatasetConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => {
            let train = load_idx(train_images, train_labels)?;
            let test = load_idx(test_images, test_labels)?;
            if train.dim() != test.dim() {
                return Err(Error::config(
                    "dataset",
                    "train and test images differ in size",
                ));
            }
            Ok((train, test))
        }
    }
}

/// Training shards plus label-matched personalized test lists.
pub fn build_partition(
    train: &Dataset,
    test: &Dataset,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<Partition> {
    let k = config.num_clients;
    let client_train = match config.partition {
        PartitionConfig::Iid => iid_partition(train.len(), k, seed)?,
        PartitionConfig::Dirichlet { gamma } => {
            dirichlet_partition(train.labels(), train.num_classes(), k, gamma, seed)?
        }
    };
    let hists: Vec<Vec<usize>> = client_train
        .iter()
        .map(|s| train.class_histogram(s))
        .collect();
    let classes = train.num_classes().max(test.num_classes());
    let client_test =
        personalized_test_split(test.labels(), classes, &hists, config.test_per_client, seed)?;
    Ok(Partition {
        client_train,
        client_test,
    })
}

pub fn build_federation(
    config: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    seed: u64,
) -> Result<Federation> {
    let classes = train.num_classes().max(test.num_classes());
    let net = Network::new(train.dim(), classes, &config.model)?;
    let partition = build_partition(train, test, config, seed)?;
    Federation::new(net, train.clone(), test.clone(), partition)
}

/// Runs one strategy on one seed, without writing anything.
pub fn run_single(
    config: &ExperimentConfig,
    strategy: StrategyKind,
    seed: u64,
) -> Result<ExperimentOutcome> {
    let (train, test) = load_datasets(config)?;
    let fed = build_federation(config, &train, &test, seed)?;
    run_experiment(
        &fed,
        &EngineConfig::from_experiment(config, strategy, seed),
        &NoObserver,
    )
}

pub fn output_root(config: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root),
        _ => config.output_dir.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: StrategyKind,
    pub seeds: Vec<u64>,
    pub rounds: usize,
    pub final_personalized_acc: Vec<Option<f64>>,
    pub final_global_acc: Vec<Option<f64>>,
    pub personalized_acc: Option<MeanStd>,
    pub global_acc: Option<MeanStd>,
    pub total_bytes_up: Vec<u64>,
    pub total_bytes_down: Vec<u64>,
}

fn last_some(ledgers: &[RoundLedger], f: impl Fn(&RoundLedger) -> Option<f64>) -> Option<f64> {
    ledgers.iter().rev().find_map(f)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_seed_artifacts(dir: &Path, outcome: &ExperimentOutcome) -> Result<()> {
    create_dir(dir)?;
    write_ledger_csv(&dir.join("ledger.csv"), &outcome.ledgers)?;
    write_ledger_jsonl(&dir.join("ledger.jsonl"), &outcome.ledgers)?;
    save_checkpoint(
        &outcome.state.global,
        &dir.join("global.bin"),
        &dir.join("global.json"),
    )?;
    let masks = dir.join("masks");
    create_dir(&masks)?;
    for (k, m) in outcome.state.client_masks.iter().enumerate() {
        let path = masks.join(format!("client_{k:03}.mask"));
        std::fs::write(&path, m.to_bytes()).map_err(|e| Error::io(&path, e))?;
    }
    if !outcome.state.local_params.is_empty() {
        let local = dir.join("local");
        create_dir(&local)?;
        for (k, p) in outcome.state.local_params.iter().enumerate() {
            save_checkpoint(
                p,
                &local.join(format!("client_{k:03}.bin")),
                &local.join(format!("client_{k:03}.json")),
            )?;
        }
    }
    Ok(())
}

/// Executes every configured strategy and seed and writes all artifacts.
pub fn run(config: &ExperimentConfig) -> Result<Vec<StrategySummary>> {
    config.validate()?;
    let root = output_root(config);
    create_dir(&root)?;
    write_json(&root.join("config.json"), config)?;
    let (train, test) = load_datasets(config)?;
    let sweep = !config.sweep.is_empty();
    let mut summaries = Vec::new();
    for strategy in config.strategies() {
        let dir = if sweep {
            root.join(strategy.name())
        } else {
            root.clone()
        };
        let mut summary = StrategySummary {
            strategy,
            seeds: config.seeds.clone(),
            rounds: config.rounds,
            final_personalized_acc: Vec::new(),
            final_global_acc: Vec::new(),
            personalized_acc: None,
            global_acc: None,
            total_bytes_up: Vec::new(),
            total_bytes_down: Vec::new(),
        };
        for &seed in &config.seeds {
            log::info!("running {} with seed {seed}", strategy.name());
            let fed = build_federation(config, &train, &test, seed)?;
            let outcome = run_experiment(
                &fed,
                &EngineConfig::from_experiment(config, strategy, seed),
                &NoObserver,
            )?;
            write_seed_artifacts(&dir.join(format!("seed_{seed}")), &outcome)?;
            summary
                .final_personalized_acc
                .push(last_some(&outcome.ledgers, |l| l.mean_personalized_acc));
            summary
                .final_global_acc
                .push(last_some(&outcome.ledgers, |l| l.global_acc));
            summary
                .total_bytes_up
                .push(outcome.ledgers.iter().map(|l| l.bytes_up).sum());
            summary
                .total_bytes_down
                .push(outcome.ledgers.iter().map(|l| l.bytes_down).sum());
        }
        let flat = |v: &[Option<f64>]| v.iter().flatten().copied().collect::<Vec<_>>();
        summary.personalized_acc = MeanStd::of(&flat(&summary.final_personalized_acc));
        summary.global_acc = MeanStd::of(&flat(&summary.final_global_acc));
        create_dir(&dir)?;
        write_json(&dir.join("summary.json"), &summary)?;
        summaries.push(summary);
    }
    Ok(summaries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub name: String,
    pub rounds: usize,
    pub final_personalized_acc: Option<f64>,
    pub final_global_acc: Option<f64>,
    /// Headline bytes, up plus down.
    pub total_bytes: u64,
    pub total_flops: u64,
    /// One entry per target; `None` when the target was never reached.
    pub rounds_to_target: Vec<Option<usize>>,
}

/// Rounds until the personalized accuracy column first reaches `target`
/// (`round + 1` of the first hit).
pub fn rounds_to_accuracy(rows: &[LedgerRow], target: f64) -> Option<usize> {
    rows.iter()
        .find(|r| r.mean_personalized_acc.is_some_and(|a| a >= target))
        .map(|r| r.round + 1)
}

pub fn compare_rows(
    named: &[(String, Vec<LedgerRow>)],
    targets: &[f64],
) -> Result<Vec<CompareRow>> {
    if named.len() < 2 {
        return Err(Error::config(
            "ledgers",
            "compare needs at least two ledgers",
        ));
    }
    let rounds = named[0].1.len();
    if let Some((name, rows)) = named.iter().find(|(_, rows)| rows.len() != rounds) {
        return Err(Error::config(
            "ledgers",
            format!(
                "{name} has {} rounds but {} has {rounds}",
                rows.len(),
                named[0].0
            ),
        ));
    }
    if let Some(t) = targets.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::config(
            "targets",
            format!("accuracy target {t} outside [0, 1]"),
        ));
    }
    Ok(named
        .iter()
        .map(|(name, rows)| CompareRow {
            name: name.clone(),
            rounds,
            final_personalized_acc: rows.iter().rev().find_map(|r| r.mean_personalized_acc),
            final_global_acc: rows.iter().rev().find_map(|r| r.global_acc),
            total_bytes: rows.iter().map(|r| r.bytes_up + r.bytes_down).sum(),
            total_flops: rows
                .iter()
                .map(|r| r.flops_train + r.flops_masksearch)
                .sum(),
            rounds_to_target: targets
                .iter()
                .map(|&t| rounds_to_accuracy(rows, t))
                .collect(),
        })
        .collect())
}

pub fn compare_ledgers(paths: &[PathBuf], targets: &[f64]) -> Result<Vec<CompareRow>> {
    let named = paths
        .iter()
        .map(|p| Ok((p.display().to_string(), read_ledger_csv(p)?)))
        .collect::<Result<Vec<_>>>()?;
    compare_rows(&named, targets)
}

fn fmt_acc(a: Option<f64>) -> String {
    a.map_or_else(|| "-".into(), |a| format!("{:.4}", a))
}

fn fmt_rounds(r: Option<usize>, total: usize) -> String {
    r.map_or_else(|| format!(">{total}"), |r| r.to_string())
}

fn header(targets: &[f64]) -> Vec<String> {
    let mut h: Vec<String> = [
        "ledger",
        "final_personalized_acc",
        "final_global_acc",
        "total_bytes",
        "total_flops",
    ]
    .map(String::from)
    .to_vec();
    h.extend(targets.iter().map(|t| format!("rounds_to_{t}")));
    h
}

fn cells(row: &CompareRow) -> Vec<String> {
    let mut c = vec![
        row.name.clone(),
        fmt_acc(row.final_personalized_acc),
        fmt_acc(row.final_global_acc),
        row.total_bytes.to_string(),
        row.total_flops.to_string(),
    ];
    c.extend(
        row.rounds_to_target
            .iter()
            .map(|&r| fmt_rounds(r, row.rounds)),
    );
    c
}

pub fn compare_csv(rows: &[CompareRow], targets: &[f64]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header(targets)).expect("in-memory write");
    for r in rows {
        w.write_record(cells(r)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn compare_table(rows: &[CompareRow], targets: &[f64]) -> String {
    let mut grid = vec![header(targets)];
    grid.extend(rows.iter().map(cells));
    let widths: Vec<usize> = (0..grid[0].len())
        .map(|c| grid.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in &grid {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

/// Human-readable per-layer summary of a mask file.
pub fn inspect_mask(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let blob = MaskBlob::from_bytes(&bytes)?;
    let active = blob.active_per_layer();
    let mut out = String::new();
    let _ = writeln!(out, "layer  count  active  density");
    for (j, (&c, &a)) in blob.layer_counts.iter().zip(&active).enumerate() {
        let _ = writeln!(out, "{j:<5}  {c:<5}  {a:<6}  {:.4}", a as f64 / c as f64);
    }
    let total_active: usize = active.iter().sum();
    let _ = writeln!(
        out,
        "total  {}  {}  {:.4}",
        blob.total(),
        total_active,
        total_active as f64 / blob.total() as f64
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(round: usize, acc: Option<f64>) -> LedgerRow {
        LedgerRow {
            round,
            participants: 2,
            lr: 0.1,
            alpha: 0.0,
            bytes_up: 10,
            bytes_down: 20,
            mask_overhead_bytes: 0,
            bias_bytes: 0,
            flops_train: 5,
            flops_masksearch: 1,
            train_loss: 1.0,
            mean_personalized_acc: acc,
            global_acc: acc,
            mask_churn_total: 0,
            p_proxy_mean: None,
            p_proxy_max: None,
            grad_norm_sq: None,
        }
    }

    #[test]
    fn first_hit_semantics() {
        let rows = vec![
            row(0, Some(0.5)),
            row(1, None),
            row(2, Some(0.8)),
            row(3, Some(0.7)),
        ];
        assert_eq!(rounds_to_accuracy(&rows, 0.5), Some(1));
        assert_eq!(rounds_to_accuracy(&rows, 0.75), Some(3));
        assert_eq!(rounds_to_accuracy(&rows, 0.9), None);
    }

    #[test]
    fn never_reached_prints_sentinel() {
        let rows = vec![row(0, Some(0.1)), row(1, Some(0.2))];
        let named = vec![("a".to_string(), rows.clone()), ("b".to_string(), rows)];
        let out = compare_rows(&named, &[0.9]).unwrap();
        assert_eq!(out[0], out[1].clone().with_name("a"));
        let csv = compare_csv(&out, &[0.9]);
        assert!(csv.lines().nth(1).unwrap().ends_with(",>2"), "{csv}");
        assert_eq!(out[0].total_bytes, 60);
        assert_eq!(out[0].total_flops, 12);
    }

    impl CompareRow {
        fn with_name(mut self, name: &str) -> Self {
            self.name = name.into();
            self
        }
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let named = vec![
            ("a".to_string(), vec![row(0, None)]),
            ("b".to_string(), vec![]),
        ];
        assert!(compare_rows(&named, &[0.5]).unwrap_err().is_config());
        assert!(compare_rows(&named[..1], &[0.5]).is_err());
    }

    #[test]
    fn mean_std() {
        assert_eq!(MeanStd::of(&[]), None);
        assert_eq!(MeanStd::of(&[0.5]).unwrap().std, 0.0);
        let m = MeanStd::of(&[1.0, 3.0]).unwrap();
        assert_eq!((m.mean, m.std), (2.0, 2f64.sqrt()));
    }
}
