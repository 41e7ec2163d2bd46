//! Mask serialization.
//!
//! Binary blob, all integers little-endian:
//!
//! ```text
//! u32                 number of layers L
//! u64 × L             parameter count of each layer
//! u8  × ceil(d / 8)   packed bits, flat index i at byte i / 8, bit i % 8 (LSB first)
//! ```
//!
//! where `d` is the sum of the layer counts. Padding bits in the last byte
//! are zero. The debug JSON form lists layer-local active indices per layer.

use std::sync::Arc;

use byteorder::{ByteOrder, LittleEndian};
use serde::{Deserialize, Serialize};

use super::{LayerLayout, Mask};
use crate::{Error, Result};

/// A decoded mask blob that has not yet been bound to a layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskBlob {
    pub layer_counts: Vec<usize>,
    words: Vec<u64>,
}

fn format_err(message: impl Into<String>) -> Error {
    Error::Format {
        what: "mask blob",
        message: message.into(),
    }
}

impl MaskBlob {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(format_err("truncated header"));
        }
        let layers = LittleEndian::read_u32(&bytes[..4]) as usize;
        let header_len = layers
            .checked_mul(8)
            .and_then(|n| n.checked_add(4))
            .ok_or_else(|| format_err("layer count overflows"))?;
        if bytes.len() < header_len {
            return Err(format_err(format!(
                "header declares {layers} layers but is truncated"
            )));
        }
        let layer_counts: Vec<usize> = bytes[4..header_len]
            .chunks_exact(8)
            .map(|c| LittleEndian::read_u64(c) as usize)
            .collect();
        let total: usize = layer_counts.iter().sum();
        let body = &bytes[header_len..];
        if body.len() != total.div_ceil(8) {
            return Err(format_err(format!(
                "expected {} bit bytes for {total} weights, found {}",
                total.div_ceil(8),
                body.len()
            )));
        }
        if !total.is_multiple_of(8) && body[body.len() - 1] >> (total % 8) != 0 {
            return Err(format_err("non-zero padding bits"));
        }
        let mut words = vec![0u64; total.div_ceil(64)];
        for (i, &b) in body.iter().enumerate() {
            words[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        Ok(Self {
            layer_counts,
            words,
        })
    }

    pub fn total(&self) -> usize {
        self.layer_counts.iter().sum()
    }

    pub fn get(&self, index: usize) -> bool {
        (self.words[index / 64] >> (index % 64)) & 1 == 1
    }

    pub fn active_per_layer(&self) -> Vec<usize> {
        let mut offset = 0;
        self.layer_counts
            .iter()
            .map(|&c| {
                let n = (offset..offset + c).filter(|&i| self.get(i)).count();
                offset += c;
                n
            })
            .collect()
    }

    /// Binds the bits to `layout`, checking the per-layer counts agree.
    pub fn into_mask(self, layout: Arc<LayerLayout>) -> Result<Mask> {
        if self.layer_counts != layout.counts() {
            return Err(Error::Argument(format!(
                "mask blob layer counts {:?} do not match layout {:?}",
                self.layer_counts,
                layout.counts()
            )));
        }
        Ok(Mask::from_words(layout, self.words))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskJsonLayer {
    pub count: usize,
    pub active: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskJson {
    pub layers: Vec<MaskJsonLayer>,
}

impl Mask {
    pub fn to_bytes(&self) -> Vec<u8> {
        let layout = self.layout();
        let mut out = Vec::with_capacity(4 + 8 * layout.num_layers() + self.len().div_ceil(8));
        let mut buf = [0u8; 8];
        LittleEndian::write_u32(&mut buf[..4], layout.num_layers() as u32);
        out.extend_from_slice(&buf[..4]);
        for layer in layout.layers() {
            LittleEndian::write_u64(&mut buf, layer.count as u64);
            out.extend_from_slice(&buf);
        }
        for i in 0..self.len().div_ceil(8) {
            out.push((self.words()[i / 8] >> (8 * (i % 8))) as u8);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], layout: Arc<LayerLayout>) -> Result<Self> {
        MaskBlob::from_bytes(bytes)?.into_mask(layout)
    }

    pub fn to_json(&self) -> MaskJson {
        let layers = self
            .layout()
            .layers()
            .iter()
            .enumerate()
            .map(|(j, spec)| MaskJsonLayer {
                count: spec.count,
                active: self.active_in_layer(j).map(|i| i - spec.offset).collect(),
            })
            .collect();
        MaskJson { layers }
    }

    pub fn from_json(json: &MaskJson, layout: Arc<LayerLayout>) -> Result<Self> {
        let counts: Vec<usize> = json.layers.iter().map(|l| l.count).collect();
        if counts != layout.counts() {
            return Err(Error::Argument(format!(
                "mask json layer counts {counts:?} do not match layout {:?}",
                layout.counts()
            )));
        }
        let mut indices = Vec::new();
        for (layer, spec) in json.layers.iter().zip(layout.layers()) {
            if let Some(&bad) = layer.active.iter().find(|&&i| i >= spec.count) {
                return Err(Error::Argument(format!(
                    "active index {bad} outside a layer of {} weights",
                    spec.count
                )));
            }
            indices.extend(layer.active.iter().map(|&i| spec.offset + i));
        }
        Mask::from_indices(layout, indices)
    }
}
