//! Datasets, IDX ingestion, client partitions and personalized test splits.

mod idx;
mod partition;
mod synth;

use std::io::Write;
use std::path::Path;

pub use idx::{load_idx, IdxError, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use partition::{
    dirichlet_partition, iid_partition, largest_remainder, personalized_test_split, Partition,
};
pub use synth::{synth_dataset, synth_train_test};

use crate::model::Batch;
use crate::{Error, Result};

/// Row-major feature matrix with one integer label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(Error::Argument(format!(
                "{} feature values do not form {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Argument(format!(
                "label {bad} >= {num_classes} classes"
            )));
        }
        Ok(Self {
            features,
            dim,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Gathers the given rows into a batch.
    pub fn batch(&self, indices: &[usize]) -> Batch {
        let mut inputs = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            inputs.extend_from_slice(self.row(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Batch::new(inputs, self.dim, labels).expect("rows gathered from a valid dataset")
    }

    /// Per-class sample counts over `indices`.
    pub fn class_histogram(&self, indices: &[usize]) -> Vec<usize> {
        let mut hist = vec![0; self.num_classes];
        for &i in indices {
            hist[self.labels[i]] += 1;
        }
        hist
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let mut header: Vec<String> = (0..self.dim).map(|j| format!("x{j}")).collect();
        header.push("label".into());
        let write = |out: &mut std::io::BufWriter<std::fs::File>| -> std::io::Result<()> {
            writeln!(out, "{}", header.join(","))?;
            for i in 0..self.len() {
                for v in self.row(i) {
                    write!(out, "{v},")?;
                }
                writeln!(out, "{}", self.labels[i])?;
            }
            out.flush()
        };
        write(&mut out).map_err(|e| Error::io(path, e))
    }
}
