//! Dense row-major real matrices and their fixed-point integer view.
//!
//! `RealMatrix` carries the data blocks, masks, encoded shares and results of
//! the coded pipeline. `QuantizedMatrix` is the integer image used by the
//! matrix cipher, which must be lossless.

use std::fmt;

use crate::error::{Error, Result};

/// Largest magnitude accepted by [`RealMatrix::quantize`] before any modulus
/// is known. Keeps every entry comfortably inside `i128`.
pub const QUANT_LIMIT: i128 = 1 << 120;

#[derive(Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for RealMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RealMatrix {}x{} ", self.rows, self.cols)?;
        f.debug_list()
            .entries(self.data.chunks(self.cols.max(1)))
            .finish()
    }
}

fn shape_str(m: &RealMatrix) -> String {
    format!("{}x{}", m.rows, m.cols)
}

impl RealMatrix {
    /// Builds a matrix from row-major entries. All entries must be finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite entry {} at ({}, {})",
                data[pos],
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::from_raw(rows, cols, data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Column vector with the given entries.
    pub fn column(values: &[f64]) -> Self {
        Self::from_raw(values.len(), 1, values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    fn check_same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::InvalidArgument(format!(
                "{op}: shape mismatch {} vs {}",
                shape_str(self),
                shape_str(other)
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other, op)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self::from_raw(self.rows, self.cols, data))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    /// `self += s * other`, used by the encoder and decoder accumulators.
    pub(crate) fn axpy(&mut self, s: f64, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::InvalidArgument(format!(
                "matmul: shape mismatch {} vs {}",
                shape_str(self),
                shape_str(other)
            )));
        }
        let (n, m, p) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * p];
        // i-k-j order streams over contiguous rows of `other`.
        for i in 0..n {
            let out_row = &mut out[i * p..(i + 1) * p];
            for k in 0..m {
                let a = self.data[i * m + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * p..(k + 1) * p];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self::from_raw(n, p, out))
    }

    /// Maximum absolute entry (`‖·‖∞` over entries).
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Splits the rows into `k` equal blocks of `ceil(rows / k)` rows. The last
    /// block is padded with zero rows at the bottom when `k` does not divide
    /// `rows`.
    pub fn partition_rows(&self, k: usize) -> Result<Vec<Self>> {
        if k == 0 {
            return Err(Error::InvalidArgument("partition_rows: K must be at least 1".into()));
        }
        let block_rows = self.rows.div_ceil(k);
        let block_len = block_rows * self.cols;
        let blocks = (0..k)
            .map(|b| {
                let start = (b * block_len).min(self.data.len());
                let end = ((b + 1) * block_len).min(self.data.len());
                let mut data = self.data[start..end].to_vec();
                data.resize(block_len, 0.0);
                Self::from_raw(block_rows, self.cols, data)
            })
            .collect();
        Ok(blocks)
    }

    /// Vertical concatenation.
    pub fn vstack(blocks: &[Self]) -> Result<Self> {
        let cols = blocks.first().map_or(0, |b| b.cols);
        if let Some(bad) = blocks.iter().find(|b| b.cols != cols) {
            return Err(Error::InvalidArgument(format!(
                "vstack: column mismatch {} vs {cols}",
                bad.cols
            )));
        }
        let rows = blocks.iter().map(|b| b.rows).sum();
        let data = blocks.iter().flat_map(|b| b.data.iter().copied()).collect();
        Ok(Self::from_raw(rows, cols, data))
    }

    /// Keeps the first `rows` rows.
    pub fn truncate_rows(&self, rows: usize) -> Result<Self> {
        if rows > self.rows {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate {} rows to {rows}",
                self.rows
            )));
        }
        Ok(Self::from_raw(rows, self.cols, self.data[..rows * self.cols].to_vec()))
    }

    /// Fixed-point image with `round(x * 2^scale_bits)` entries.
    pub fn quantize(&self, scale_bits: u32) -> Result<QuantizedMatrix> {
        self.quantize_within(scale_bits, QUANT_LIMIT)
    }

    /// As [`quantize`](Self::quantize) with an explicit exclusive bound on the
    /// magnitude of every integer entry.
    pub fn quantize_within(&self, scale_bits: u32, bound: i128) -> Result<QuantizedMatrix> {
        if scale_bits > 100 {
            return Err(Error::InvalidArgument(format!("scale_bits {scale_bits} exceeds 100")));
        }
        let factor = 2f64.powi(scale_bits as i32);
        let limit = bound.min(QUANT_LIMIT) as f64;
        let mut data = Vec::with_capacity(self.data.len());
        for (pos, &v) in self.data.iter().enumerate() {
            let scaled = (v * factor).round();
            if !scaled.is_finite() || scaled.abs() >= limit {
                return Err(Error::Range(format!(
                    "entry ({}, {}) = {v} scaled by 2^{scale_bits} exceeds the bound {bound}",
                    pos / self.cols.max(1),
                    pos % self.cols.max(1)
                )));
            }
            let e = scaled as i128;
            if e.abs() >= bound {
                return Err(Error::Range(format!(
                    "entry ({}, {}) = {v} quantizes to {e}, outside the bound {bound}",
                    pos / self.cols.max(1),
                    pos % self.cols.max(1)
                )));
            }
            data.push(e);
        }
        Ok(QuantizedMatrix { rows: self.rows, cols: self.cols, scale_bits, data })
    }

    /// Parses the text format: a `rows cols` header line followed by one
    /// whitespace-separated row per line.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("matrix text is empty".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidArgument(format!("bad header `{header}`: {e}")))?;
        let [rows, cols] = dims[..] else {
            return Err(Error::InvalidArgument(format!("bad header `{header}`")));
        };
        let mut data = Vec::with_capacity(rows * cols);
        for (i, line) in lines.enumerate() {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidArgument(format!("row {i}: {e}")))?;
            if row.len() != cols {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has {} values, expected {cols}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "expected {rows} rows, found {}",
                data.len() / cols.max(1)
            )));
        }
        Self::new(rows, cols, data)
    }

    /// Serializes to the text format. Uses the shortest decimal that
    /// round-trips each `f64`.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.rows, self.cols);
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Signed fixed-point view of a [`RealMatrix`]: `value = entry / 2^scale_bits`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedMatrix {
    rows: usize,
    cols: usize,
    scale_bits: u32,
    data: Vec<i128>,
}

impl QuantizedMatrix {
    pub fn new(rows: usize, cols: usize, scale_bits: u32, data: Vec<i128>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, scale_bits, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn scale_bits(&self) -> u32 {
        self.scale_bits
    }

    pub fn entries(&self) -> &[i128] {
        &self.data
    }

    pub fn max_abs(&self) -> u128 {
        self.data.iter().map(|e| e.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn dequantize(&self) -> RealMatrix {
        let factor = 2f64.powi(-(self.scale_bits as i32));
        RealMatrix::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|&e| e as f64 * factor).collect(),
        )
    }
}
