use std::sync::Arc;

use crate::sparse::{LayerLayout, Mask};
use crate::{Error, Result};

/// Flat weight vector laid out by a [`LayerLayout`] plus one dense bias
/// vector per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub values: Vec<f64>,
    pub biases: Vec<Vec<f64>>,
    layout: Arc<LayerLayout>,
}

impl ModelParams {
    pub fn new(layout: Arc<LayerLayout>, values: Vec<f64>, biases: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != layout.total() {
            return Err(Error::Argument(format!(
                "{} weights for a layout of {}",
                values.len(),
                layout.total()
            )));
        }
        let widths: Vec<usize> = layout.layers().iter().map(|l| l.kind.outputs()).collect();
        let got: Vec<usize> = biases.iter().map(Vec::len).collect();
        if widths != got {
            return Err(Error::Argument(format!(
                "bias widths {got:?} do not match layer outputs {widths:?}"
            )));
        }
        Ok(Self {
            values,
            biases,
            layout,
        })
    }

    pub fn zeros(layout: Arc<LayerLayout>) -> Self {
        let biases = layout
            .layers()
            .iter()
            .map(|l| vec![0.0; l.kind.outputs()])
            .collect();
        Self {
            values: vec![0.0; layout.total()],
            biases,
            layout,
        }
    }

    pub fn layout(&self) -> &Arc<LayerLayout> {
        &self.layout
    }

    pub fn bias_count(&self) -> usize {
        self.biases.iter().map(Vec::len).sum()
    }

    /// `m ⊙ w` with biases copied unchanged.
    pub fn masked(&self, mask: &Mask) -> Result<Self> {
        mask.check_layout(&self.layout)?;
        Ok(Self {
            values: crate::sparse::apply_mask(&self.values, mask)?,
            biases: self.biases.clone(),
            layout: self.layout.clone(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .chain(self.biases.iter().flatten())
            .all(|v| v.is_finite())
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Diverged(
                "model parameters contain NaN or Inf".into(),
            ))
        }
    }
}

/// Rows of inputs with one class label each.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    inputs: Vec<f64>,
    dim: usize,
    labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Vec<f64>, dim: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Argument("batch must hold at least one row".into()));
        }
        if dim == 0 || inputs.len() != dim * labels.len() {
            return Err(Error::Argument(format!(
                "{} inputs do not form {} rows of width {dim}",
                inputs.len(),
                labels.len()
            )));
        }
        Ok(Self {
            inputs,
            dim,
            labels,
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

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// One SGD step restricted to the mask's active weights.
///
/// Active weights move to `w − η·(g + λ·w)`; inactive weights are left
/// untouched; biases take a plain `b − η·g_b` step.
pub fn sgd_step(
    params: &ModelParams,
    mask: &Mask,
    grad: &super::GradResult,
    lr: f64,
    weight_decay: f64,
) -> Result<ModelParams> {
    mask.check_layout(params.layout())?;
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(Error::Argument(format!(
            "learning rate must be finite and >= 0, got {lr}"
        )));
    }
    if grad.grad.len() != params.values.len() {
        return Err(Error::Argument(
            "gradient does not match parameter layout".into(),
        ));
    }
    let mut next = params.clone();
    for (i, w) in next.values.iter_mut().enumerate() {
        if mask.get(i) {
            *w -= lr * (grad.grad[i] + weight_decay * *w);
        }
    }
    for (b, g) in next.biases.iter_mut().zip(&grad.bias_grad) {
        for (bv, gv) in b.iter_mut().zip(g) {
            *bv -= lr * gv;
        }
    }
    Ok(next)
}
