//! IDX files: 4-byte big-endian magic `0x0000_08NN` (unsigned bytes, `NN`
//! dimensions), then `NN` big-endian `u32` sizes, then row-major data.

use std::path::Path;

use super::Dataset;
use crate::{Error, Result};

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::IdxTruncated { path: path.to_owned() })
}

/// Raw images: `(count, rows, cols, pixels)`.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<(usize, usize, usize, Vec<u8>)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::IdxMagic { path: path.to_owned(), found: magic, expected: IDX_IMAGE_MAGIC });
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let len = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::IdxTruncated { path: path.to_owned() })?;
    let data = bytes
        .get(16..16 + len)
        .ok_or_else(|| Error::IdxTruncated { path: path.to_owned() })?;
    Ok((count, rows, cols, data.to_vec()))
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::IdxMagic { path: path.to_owned(), found: magic, expected: IDX_LABEL_MAGIC });
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let data = bytes
        .get(8..8 + count)
        .ok_or_else(|| Error::IdxTruncated { path: path.to_owned() })?;
    Ok(data.to_vec())
}

/// Images scaled to `[0, 1]` paired with labels by index. The class count is
/// one more than the largest label.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let (count, rows, cols, pixels) = load_idx_images(images)?;
    let labels = load_idx_labels(labels)?;
    if labels.len() != count {
        return Err(Error::IdxLengthMismatch { images: count, labels: labels.len() });
    }
    if count == 0 {
        return Err(Error::EmptyDataset);
    }
    let classes = labels.iter().copied().max().map_or(1, |m| usize::from(m) + 1);
    let features = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    Dataset::new(features, labels.into_iter().map(u32::from).collect(), rows * cols, classes)
}
