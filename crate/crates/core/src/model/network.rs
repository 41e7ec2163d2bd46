use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Batch, ModelParams};
use crate::rng::{self, Purpose};
use crate::sparse::{LayerKind, LayerLayout, Mask};
use crate::{Error, Result};

/// A valid (unpadded), stride-1 convolution applied to image-shaped inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub filters: usize,
    pub kernel: usize,
}

/// Hidden-layer widths and an optional leading convolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub conv: Option<ConvSpec>,
}

fn default_hidden() -> Vec<usize> {
    vec![256, 128]
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            conv: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Row-major `batch × classes`.
    pub logits: Vec<f64>,
    pub loss: f64,
    pub correct: usize,
}

/// Gradient of the mean cross-entropy; weight entries are zero wherever the
/// mask that produced it is inactive.
#[derive(Debug, Clone, PartialEq)]
pub struct GradResult {
    pub grad: Vec<f64>,
    pub bias_grad: Vec<Vec<f64>>,
    pub loss: f64,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layout: Arc<LayerLayout>,
    input_dim: usize,
    num_classes: usize,
    conv_geometry: Option<(usize, usize, usize, usize, usize)>,
}

struct Trace {
    /// Input activations of each layer, `batch × in_width`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation outputs of each layer, `batch × out_width`.
    pre: Vec<Vec<f64>>,
}

impl Network {
    pub fn new(input_dim: usize, num_classes: usize, arch: &Architecture) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::config(
                "num_classes",
                "at least 2 classes are required",
            ));
        }
        let mut kinds = Vec::new();
        let mut width = input_dim;
        let mut conv_geometry = None;
        if let Some(c) = &arch.conv {
            if c.channels * c.height * c.width != input_dim {
                return Err(Error::config(
                    "model.conv",
                    format!(
                        "{}×{}×{} image does not match input dimension {input_dim}",
                        c.channels, c.height, c.width
                    ),
                ));
            }
            if c.kernel == 0 || c.kernel > c.height || c.kernel > c.width || c.filters == 0 {
                return Err(Error::config(
                    "model.conv",
                    "kernel must fit inside the image",
                ));
            }
            let (oh, ow) = (c.height - c.kernel + 1, c.width - c.kernel + 1);
            kinds.push(LayerKind::Conv {
                in_channels: c.channels,
                out_channels: c.filters,
                kernel_h: c.kernel,
                kernel_w: c.kernel,
                positions: oh * ow,
            });
            conv_geometry = Some((c.channels, c.height, c.width, c.kernel, c.filters));
            width = c.filters * oh * ow;
        }
        for &h in &arch.hidden {
            kinds.push(LayerKind::Linear {
                inputs: width,
                outputs: h,
            });
            width = h;
        }
        kinds.push(LayerKind::Linear {
            inputs: width,
            outputs: num_classes,
        });
        Ok(Self {
            layout: Arc::new(LayerLayout::new(kinds)?),
            input_dim,
            num_classes,
            conv_geometry,
        })
    }

    pub fn layout(&self) -> &Arc<LayerLayout> {
        &self.layout
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// He-uniform weights (`U(−√(6/fan_in), √(6/fan_in))`), zero biases.
    pub fn init_params(&self, seed: u64) -> ModelParams {
        let mut rng = rng::stream(seed, Purpose::ModelInit, 0, 0);
        let mut params = ModelParams::zeros(self.layout.clone());
        for layer in self.layout.layers() {
            let fan_in = match layer.kind {
                LayerKind::Linear { inputs, .. } => inputs,
                LayerKind::Conv {
                    in_channels,
                    kernel_h,
                    kernel_w,
                    ..
                } => in_channels * kernel_h * kernel_w,
            };
            let bound = (6.0 / fan_in as f64).sqrt();
            for w in &mut params.values[layer.range()] {
                *w = rng.random_range(-bound..bound);
            }
        }
        params
    }

    fn check(&self, params: &ModelParams, mask: &Mask, batch: &Batch) -> Result<()> {
        if params.layout().as_ref() != self.layout.as_ref() {
            return Err(Error::Argument(
                "parameters do not belong to this network".into(),
            ));
        }
        mask.check_layout(&self.layout)?;
        if batch.dim() != self.input_dim {
            return Err(Error::Argument(format!(
                "batch width {} but network expects {}",
                batch.dim(),
                self.input_dim
            )));
        }
        if let Some(&bad) = batch.labels().iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::Argument(format!(
                "label {bad} >= {} classes",
                self.num_classes
            )));
        }
        Ok(())
    }

    fn run(&self, weights: &[f64], biases: &[Vec<f64>], batch: &Batch) -> Trace {
        let n = batch.len();
        let layers = self.layout.layers();
        let mut inputs = Vec::with_capacity(layers.len());
        let mut pre = Vec::with_capacity(layers.len());
        let mut x = batch.inputs().to_vec();
        for (j, spec) in layers.iter().enumerate() {
            let w = &weights[spec.range()];
            let b = &biases[j];
            let out = match spec.kind {
                LayerKind::Linear {
                    inputs: fan_in,
                    outputs,
                } => {
                    let mut out = vec![0.0; n * outputs];
                    for s in 0..n {
                        let xs = &x[s * fan_in..(s + 1) * fan_in];
                        for o in 0..outputs {
                            let row = &w[o * fan_in..(o + 1) * fan_in];
                            let dot: f64 = row.iter().zip(xs).map(|(a, b)| a * b).sum();
                            out[s * outputs + o] = b[o] + dot;
                        }
                    }
                    out
                }
                LayerKind::Conv { .. } => self.conv_forward(w, b, &x, n),
            };
            let last = j + 1 == layers.len();
            let next = if last {
                Vec::new()
            } else {
                out.iter().map(|&v| v.max(0.0)).collect()
            };
            inputs.push(std::mem::replace(&mut x, next));
            pre.push(out);
        }
        Trace { inputs, pre }
    }

    fn conv_forward(&self, w: &[f64], b: &[f64], x: &[f64], n: usize) -> Vec<f64> {
        let (c_in, h, wd, k, f) = self.conv_geometry.expect("conv layer implies geometry");
        let (oh, ow) = (h - k + 1, wd - k + 1);
        let mut out = vec![0.0; n * f * oh * ow];
        for s in 0..n {
            let xs = &x[s * c_in * h * wd..(s + 1) * c_in * h * wd];
            for fi in 0..f {
                for y in 0..oh {
                    for xo in 0..ow {
                        let mut acc = b[fi];
                        for c in 0..c_in {
                            for ki in 0..k {
                                for kj in 0..k {
                                    acc += w[((fi * c_in + c) * k + ki) * k + kj]
                                        * xs[c * h * wd + (y + ki) * wd + xo + kj];
                                }
                            }
                        }
                        out[s * f * oh * ow + (fi * oh + y) * ow + xo] = acc;
                    }
                }
            }
        }
        out
    }

    fn loss_and_dlogits(&self, logits: &[f64], labels: &[usize]) -> (f64, usize, Vec<f64>) {
        let c = self.num_classes;
        let n = labels.len();
        let mut dlogits = vec![0.0; logits.len()];
        let mut loss = 0.0;
        let mut correct = 0;
        for (s, &label) in labels.iter().enumerate() {
            let row = &logits[s * c..(s + 1) * c];
            let (mut arg, mut max) = (0, row[0]);
            for (o, &v) in row.iter().enumerate().skip(1) {
                if v > max {
                    max = v;
                    arg = o;
                }
            }
            if arg == label {
                correct += 1;
            }
            let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
            let log_z = max + sum.ln();
            loss += log_z - row[label];
            for o in 0..c {
                let p = (row[o] - log_z).exp();
                dlogits[s * c + o] = (p - f64::from(u8::from(o == label))) / n as f64;
            }
        }
        (loss / n as f64, correct, dlogits)
    }

    /// Logits, mean cross-entropy and argmax hits of the masked network.
    pub fn forward(
        &self,
        params: &ModelParams,
        mask: &Mask,
        batch: &Batch,
    ) -> Result<ForwardOutput> {
        self.check(params, mask, batch)?;
        let weights = crate::sparse::apply_mask(&params.values, mask)?;
        let mut trace = self.run(&weights, &params.biases, batch);
        let logits = trace.pre.pop().expect("at least one layer");
        let (loss, correct, _) = self.loss_and_dlogits(&logits, batch.labels());
        Ok(ForwardOutput {
            logits,
            loss,
            correct,
        })
    }

    /// `m ⊙ ∇L` of the masked network, with dense bias gradients.
    pub fn backward(&self, params: &ModelParams, mask: &Mask, batch: &Batch) -> Result<GradResult> {
        self.check(params, mask, batch)?;
        let weights = crate::sparse::apply_mask(&params.values, mask)?;
        let trace = self.run(&weights, &params.biases, batch);
        let layers = self.layout.layers();
        let n = batch.len();
        let (loss, correct, mut delta) = self.loss_and_dlogits(
            trace.pre.last().expect("at least one layer"),
            batch.labels(),
        );
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("loss became {loss}")));
        }

        let mut grad = vec![0.0; self.layout.total()];
        let mut bias_grad: Vec<Vec<f64>> =
            layers.iter().map(|l| vec![0.0; l.kind.outputs()]).collect();
        for j in (0..layers.len()).rev() {
            let spec = &layers[j];
            let w = &weights[spec.range()];
            let g = &mut grad[spec.range()];
            let x = &trace.inputs[j];
            match spec.kind {
                LayerKind::Linear {
                    inputs: fan_in,
                    outputs,
                } => {
                    for s in 0..n {
                        let xs = &x[s * fan_in..(s + 1) * fan_in];
                        for o in 0..outputs {
                            let d = delta[s * outputs + o];
                            bias_grad[j][o] += d;
                            if d != 0.0 {
                                for (gi, xi) in g[o * fan_in..(o + 1) * fan_in].iter_mut().zip(xs) {
                                    *gi += d * xi;
                                }
                            }
                        }
                    }
                    if j > 0 {
                        let mut dx = vec![0.0; n * fan_in];
                        for s in 0..n {
                            let dxs = &mut dx[s * fan_in..(s + 1) * fan_in];
                            for o in 0..outputs {
                                let d = delta[s * outputs + o];
                                if d != 0.0 {
                                    for (dv, wv) in
                                        dxs.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in])
                                    {
                                        *dv += d * wv;
                                    }
                                }
                            }
                        }
                        for (dv, &p) in dx.iter_mut().zip(&trace.pre[j - 1]) {
                            if p <= 0.0 {
                                *dv = 0.0;
                            }
                        }
                        delta = dx;
                    }
                }
                LayerKind::Conv { .. } => {
                    debug_assert_eq!(j, 0, "convolution is only supported as the first layer");
                    let (c_in, h, wd, k, f) = self.conv_geometry.expect("conv geometry");
                    let (oh, ow) = (h - k + 1, wd - k + 1);
                    for s in 0..n {
                        let xs = &x[s * c_in * h * wd..(s + 1) * c_in * h * wd];
                        for fi in 0..f {
                            for y in 0..oh {
                                for xo in 0..ow {
                                    let d = delta[s * f * oh * ow + (fi * oh + y) * ow + xo];
                                    bias_grad[j][fi] += d;
                                    if d == 0.0 {
                                        continue;
                                    }
                                    for c in 0..c_in {
                                        for ki in 0..k {
                                            for kj in 0..k {
                                                g[((fi * c_in + c) * k + ki) * k + kj] +=
                                                    d * xs[c * h * wd + (y + ki) * wd + xo + kj];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        for (i, g) in grad.iter_mut().enumerate() {
            if !mask.get(i) {
                *g = 0.0;
            }
        }
        Ok(GradResult {
            grad,
            bias_grad,
            loss,
            correct,
        })
    }
}
