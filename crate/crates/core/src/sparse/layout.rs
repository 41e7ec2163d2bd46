use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Geometry of one weight tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    /// Dense matrix stored row-major as `[outputs][inputs]`.
    Linear { inputs: usize, outputs: usize },
    /// Convolution kernel stored as `[out_channels][in_channels][kernel_h][kernel_w]`.
    ///
    /// `positions` is the number of output spatial positions the kernel is
    /// evaluated at per sample; it only feeds FLOP accounting.
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        positions: usize,
    },
}

impl LayerKind {
    pub fn shape(&self) -> Vec<usize> {
        match *self {
            LayerKind::Linear { inputs, outputs } => vec![outputs, inputs],
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                ..
            } => vec![out_channels, in_channels, kernel_h, kernel_w],
        }
    }

    pub fn count(&self) -> usize {
        self.shape().iter().product()
    }

    /// Width of the bias vector that accompanies this layer.
    pub fn outputs(&self) -> usize {
        match *self {
            LayerKind::Linear { outputs, .. } => outputs,
            LayerKind::Conv { out_channels, .. } => out_channels,
        }
    }

    /// Number of times each weight is used per sample in a forward pass.
    pub fn positions(&self) -> usize {
        match *self {
            LayerKind::Linear { .. } => 1,
            LayerKind::Conv { positions, .. } => positions,
        }
    }

    /// Unscaled Erdős-Rényi(-Kernel) density factor of the layer.
    pub fn erk_factor(&self) -> f64 {
        match *self {
            LayerKind::Linear { inputs, outputs } => {
                let (i, o) = (inputs as f64, outputs as f64);
                (i + o) / (i * o)
            }
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                ..
            } => {
                let (i, o) = (in_channels as f64, out_channels as f64);
                let (w, h) = (kernel_w as f64, kernel_h as f64);
                (i + o + w + h) / (i * o * w * h)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let dims_ok = self.shape().iter().all(|&d| d >= 1) && self.positions() >= 1;
        if dims_ok {
            Ok(())
        } else {
            Err(Error::config(
                "layout",
                format!("layer dimensions must be >= 1, got {self:?}"),
            ))
        }
    }
}

/// One layer placed in the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    pub offset: usize,
    pub count: usize,
}

impl LayerSpec {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.count
    }
}

/// Ordered, contiguous partition of the flat weight vector into layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerLayout {
    layers: Vec<LayerSpec>,
    total: usize,
}

impl LayerLayout {
    pub fn new(kinds: impl IntoIterator<Item = LayerKind>) -> Result<Self> {
        let mut layers = Vec::new();
        let mut offset = 0;
        for kind in kinds {
            kind.validate()?;
            let count = kind.count();
            layers.push(LayerSpec {
                kind,
                offset,
                count,
            });
            offset += count;
        }
        if layers.is_empty() {
            return Err(Error::config("layout", "at least one layer is required"));
        }
        Ok(Self {
            layers,
            total: offset,
        })
    }

    /// Convenience constructor for a stack of linear layers given as `(inputs, outputs)`.
    pub fn linear(dims: &[(usize, usize)]) -> Result<Self> {
        Self::new(
            dims.iter()
                .map(|&(inputs, outputs)| LayerKind::Linear { inputs, outputs }),
        )
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn counts(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.count).collect()
    }

    /// Index of the layer that owns flat position `index`.
    pub fn layer_of(&self, index: usize) -> Option<usize> {
        if index >= self.total {
            return None;
        }
        Some(self.layers.partition_point(|l| l.offset + l.count <= index))
    }
}

impl<'de> Deserialize<'de> for LayerLayout {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            layers: Vec<LayerSpec>,
        }
        let raw = Raw::deserialize(deserializer)?;
        let layout = LayerLayout::new(raw.layers.iter().map(|l| l.kind.clone()))
            .map_err(serde::de::Error::custom)?;
        if layout.layers != raw.layers {
            return Err(serde::de::Error::custom(
                "layer offsets/counts are not contiguous or do not match their shapes",
            ));
        }
        Ok(layout)
    }
}
