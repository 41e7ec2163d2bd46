//! Model checkpoints: a flat little-endian `f64` file holding all weights in
//! layout order followed by every bias vector in layer order, and a JSON
//! sidecar describing the layout.

use std::path::Path;
use std::sync::Arc;

use byteorder::{ByteOrder, LittleEndian};
use serde::{Deserialize, Serialize};

use super::ModelParams;
use crate::sparse::LayerLayout;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub weight_count: usize,
    pub bias_count: usize,
    pub layout: LayerLayout,
}

const FORMAT: &str = "f64-le";

pub fn save_checkpoint(params: &ModelParams, bin_path: &Path, json_path: &Path) -> Result<()> {
    params.check_finite()?;
    let values: Vec<f64> = params
        .values
        .iter()
        .chain(params.biases.iter().flatten())
        .copied()
        .collect();
    let mut bytes = vec![0u8; values.len() * 8];
    LittleEndian::write_f64_into(&values, &mut bytes);
    std::fs::write(bin_path, bytes).map_err(|e| Error::io(bin_path, e))?;
    let meta = CheckpointMeta {
        format: FORMAT.into(),
        weight_count: params.values.len(),
        bias_count: params.bias_count(),
        layout: params.layout().as_ref().clone(),
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Json {
        path: json_path.to_path_buf(),
        source: e,
    })?;
    std::fs::write(json_path, text).map_err(|e| Error::io(json_path, e))
}

pub fn load_checkpoint(bin_path: &Path, json_path: &Path) -> Result<ModelParams> {
    let text = std::fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: json_path.to_path_buf(),
        source: e,
    })?;
    let bad = |message: String| Error::Format {
        what: "checkpoint",
        message,
    };
    if meta.format != FORMAT {
        return Err(bad(format!("unsupported format {:?}", meta.format)));
    }
    let widths: Vec<usize> = meta
        .layout
        .layers()
        .iter()
        .map(|l| l.kind.outputs())
        .collect();
    if meta.weight_count != meta.layout.total() || meta.bias_count != widths.iter().sum::<usize>() {
        return Err(bad("sidecar counts disagree with its layout".into()));
    }
    let bytes = std::fs::read(bin_path).map_err(|e| Error::io(bin_path, e))?;
    let expected = 8 * (meta.weight_count + meta.bias_count);
    if bytes.len() != expected {
        return Err(bad(format!(
            "expected {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let mut values = vec![0.0; meta.weight_count + meta.bias_count];
    LittleEndian::read_f64_into(&bytes, &mut values);
    let mut rest = values.split_off(meta.weight_count);
    let mut biases = Vec::with_capacity(widths.len());
    for w in widths {
        let tail = rest.split_off(w);
        biases.push(std::mem::replace(&mut rest, tail));
    }
    let params = ModelParams::new(Arc::new(meta.layout), values, biases)?;
    params.check_finite()?;
    Ok(params)
}
