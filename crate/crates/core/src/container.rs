//! `CORSEM01` binary matrix container.
//!
//! Layout: 8 ASCII magic bytes, `n_rows` and `n_cols` as little-endian `u32`,
//! then `n_rows * n_cols` little-endian `f32` values in row-major order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CORSEM01";
const HEADER_LEN: usize = 16;

/// Row-major dense `f32` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixContainer {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f32>,
}

impl MatrixContainer {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f32>) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::Shape(format!(
                "matrix dimensions must be positive, got {n_rows}x{n_cols}"
            )));
        }
        if n_rows > u32::MAX as usize || n_cols > u32::MAX as usize {
            return Err(Error::Shape("dimension exceeds u32".into()));
        }
        if values.len() != n_rows * n_cols {
            return Err(Error::Shape(format!(
                "{} values for a {n_rows}x{n_cols} matrix",
                values.len()
            )));
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
        })
    }

    /// Like [`MatrixContainer::new`] but rejects NaN and infinities.
    pub fn new_finite(n_rows: usize, n_cols: usize, values: Vec<f32>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Self::new(n_rows, n_cols, values)
    }

    pub fn row_vector(values: Vec<f32>) -> Result<Self> {
        Self::new(1, values.len(), values)
    }

    pub fn from_f64(n_rows: usize, n_cols: usize, values: &[f64]) -> Result<Self> {
        Self::new(n_rows, n_cols, values.iter().map(|&v| v as f32).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.n_cols + col]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.values[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn column(&self, col: usize) -> Vec<f32> {
        (0..self.n_rows).map(|r| self.get(r, col)).collect()
    }

    /// Rows selected in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            if r >= self.n_rows {
                return Err(Error::IndexOutOfRange {
                    index: r,
                    len: self.n_rows,
                });
            }
            values.extend_from_slice(self.row(r));
        }
        Self::new(rows.len(), self.n_cols, values)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.n_rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_cols as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses a container, rejecting non-finite payload values.
    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let m = Self::parse(bytes, origin)?;
        if let Some(index) = m.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(m)
    }

    fn parse(bytes: &[u8], origin: &Path) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            if bytes.len() >= 8 && &bytes[..8] != MAGIC {
                return Err(Error::BadMagic(origin.to_path_buf()));
            }
            return Err(Error::Truncated {
                path: origin.to_path_buf(),
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::BadMagic(origin.to_path_buf()));
        }
        let n_rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let n_cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::Shape(format!(
                "{}: zero dimension {n_rows}x{n_cols}",
                origin.display()
            )));
        }
        let expected = HEADER_LEN + 4 * n_rows * n_cols;
        if bytes.len() != expected {
            return Err(Error::Truncated {
                path: origin.to_path_buf(),
                expected,
                found: bytes.len(),
            });
        }
        let values = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(n_rows, n_cols, values)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Reads statistic payloads, where `±inf` is a legal sentinel. NaN is
    /// still rejected.
    pub fn read_allow_infinite(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let m = Self::parse(&bytes, path)?;
        if let Some(index) = m.values.iter().position(|v| v.is_nan()) {
            return Err(Error::NonFinite { index });
        }
        Ok(m)
    }
}
