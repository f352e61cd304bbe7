//! Dense feature maps and the `CFM1` on-disk format.
//!
//! Layout (all little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 0..4  | magic `CFM1` |
//! | 4..8  | format version, u32 = 1 |
//! | 8..20 | rows I, cols J, dim D as u32 |
//! | 20..  | I·J·D float32, row-major, channel fastest |

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: [u8; 4] = *b"CFM1";
const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

/// I×J grid of D-dimensional descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    rows: usize,
    cols: usize,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(rows: usize, cols: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 || dim == 0 {
            return Err(Error::dims(format!("feature map dims must be >= 1, got {rows}x{cols}x{dim}")));
        }
        if data.len() != rows * cols * dim {
            return Err(Error::dims(format!(
                "expected {} values for {rows}x{cols}x{dim}, got {}",
                rows * cols * dim,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("non-finite feature value at flat index {i}")));
        }
        Ok(Self { rows, cols, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    /// Descriptor at flattened patch index `rows * cols` order.
    #[inline]
    pub fn vector(&self, idx: usize) -> &[f32] {
        &self.data[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    /// Corner-aligned bilinear resize of every channel.
    pub fn resize(&self, out_rows: usize, out_cols: usize) -> FeatureMap {
        assert!(out_rows > 0 && out_cols > 0, "output must be at least 1x1");
        let ys = super::bilinear_coords(self.rows, out_rows);
        let xs = super::bilinear_coords(self.cols, out_cols);
        let mut data = Vec::with_capacity(out_rows * out_cols * self.dim);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let (a, b) = (self.vector(y0 * self.cols + x0), self.vector(y0 * self.cols + x1));
                let (c, d) = (self.vector(y1 * self.cols + x0), self.vector(y1 * self.cols + x1));
                for k in 0..self.dim {
                    let top = a[k] as f64 * (1.0 - fx) + b[k] as f64 * fx;
                    let bot = c[k] as f64 * (1.0 - fx) + d[k] as f64 * fx;
                    data.push((top * (1.0 - fy) + bot * fy) as f32);
                }
            }
        }
        FeatureMap { rows: out_rows, cols: out_cols, dim: self.dim, data }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(&FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        for d in [self.rows, self.cols, self.dim] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated { expected: HEADER_LEN, found: bytes.len() });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != FEATURE_MAGIC {
            return Err(Error::BadMagic { expected: FEATURE_MAGIC, found: magic });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != FEATURE_VERSION {
            return Err(Error::UnsupportedVersion { found: version, supported: FEATURE_VERSION });
        }
        let (rows, cols, dim) = (word(8) as usize, word(12) as usize, word(16) as usize);
        let count = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(dim))
            .ok_or_else(|| Error::dims("feature header dimensions overflow"))?;
        let expected = HEADER_LEN + count * 4;
        if bytes.len() < expected {
            return Err(Error::Truncated { expected, found: bytes.len() });
        }
        if bytes.len() > expected {
            return Err(Error::dims(format!(
                "header declares {rows}x{cols}x{dim} ({expected} bytes) but file has {} bytes",
                bytes.len()
            )));
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        FeatureMap::new(rows, cols, dim, data)
    }
}

pub fn write_feature_file(fmap: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&fmap.to_bytes())?;
    Ok(())
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureMap> {
    FeatureMap::from_bytes(&std::fs::read(path)?)
}
