//! IDX (MNIST-family) file ingestion.
//!
//! Images: magic `0x00000803`, then big-endian `u32` item count, rows and
//! columns, then `rows · cols` unsigned bytes per item. Labels: magic
//! `0x00000801`, a big-endian `u32` item count, then one byte per item.

use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ByteOrder};

use super::Dataset;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, thiserror::Error)]
pub enum IdxError {
    #[error("{path}: bad magic number 0x{found:08x} (expected 0x{expected:08x})")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("{path}: truncated file, need {needed} bytes but found {found}")]
    Truncated {
        path: PathBuf,
        needed: usize,
        found: usize,
    },
    #[error("image file holds {images} items but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn read(path: &Path) -> Result<Vec<u8>, IdxError> {
    std::fs::read(path).map_err(|source| IdxError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn header(path: &Path, bytes: &[u8], magic: u32, words: usize) -> Result<Vec<usize>, IdxError> {
    let needed = 4 * (1 + words);
    let truncated = || IdxError::Truncated {
        path: path.to_path_buf(),
        needed,
        found: bytes.len(),
    };
    if bytes.len() < 4 {
        return Err(truncated());
    }
    let found = BigEndian::read_u32(&bytes[..4]);
    if found != magic {
        return Err(IdxError::BadMagic {
            path: path.to_path_buf(),
            expected: magic,
            found,
        });
    }
    if bytes.len() < needed {
        return Err(truncated());
    }
    Ok((0..words)
        .map(|k| BigEndian::read_u32(&bytes[4 + 4 * k..8 + 4 * k]) as usize)
        .collect())
}

fn body<'a>(path: &Path, bytes: &'a [u8], offset: usize, len: usize) -> Result<&'a [u8], IdxError> {
    let needed = offset + len;
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            path: path.to_path_buf(),
            needed,
            found: bytes.len(),
        });
    }
    Ok(&bytes[offset..needed])
}

/// Loads an image/label file pair; pixels are scaled to `[0, 1]` and the
/// class count is `max(label) + 1` (at least 2).
pub fn load_idx(images_path: &Path, labels_path: &Path) -> crate::Result<Dataset> {
    let image_bytes = read(images_path)?;
    let dims = header(images_path, &image_bytes, IDX_IMAGES_MAGIC, 3)?;
    let (items, rows, cols) = (dims[0], dims[1], dims[2]);
    let pixels = body(images_path, &image_bytes, 16, items * rows * cols)?;

    let label_bytes = read(labels_path)?;
    let label_items = header(labels_path, &label_bytes, IDX_LABELS_MAGIC, 1)?[0];
    let raw_labels = body(labels_path, &label_bytes, 8, label_items)?;

    if items != label_items {
        return Err(IdxError::CountMismatch {
            images: items,
            labels: label_items,
        }
        .into());
    }
    let features = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|&l| l as usize).collect();
    let num_classes = labels.iter().max().map_or(2, |&m| (m + 1).max(2));
    Dataset::new(features, rows * cols, labels, num_classes)
}
