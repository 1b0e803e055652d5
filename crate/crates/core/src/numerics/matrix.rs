//! Dense row-major matrix of 64-bit floats.
//!
//! Every constructor and operation rejects NaN/Inf results, so a `Matrix`
//! held by the caller is always entirely finite. Storage is an `Arc` slice:
//! clones are O(1) and values are immutable once built, which makes it safe
//! to share matrices across worker threads.

use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Arc<[f64]>,
}

impl Matrix {
    /// Builds a matrix from row-major data, validating length and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidConfig(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidConfig(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: "from_vec" });
        }
        Ok(Matrix { rows, cols, data: data.into() })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols].into(),
        }
    }

    /// 1x1 matrix holding a single value.
    pub fn scalar(v: f64) -> Result<Self> {
        Matrix::from_vec(1, 1, vec![v])
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Matrix { rows: n, cols: n, data: data.into() }
    }

    /// Builds from nested rows; handy in tests.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::EmptyInput("from_rows"));
        }
        let c = rows[0].len();
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::InvalidConfig("ragged rows".into()));
            }
            data.extend_from_slice(row);
        }
        Matrix::from_vec(r, c, data)
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The single entry of a 1x1 matrix.
    pub fn item(&self) -> Result<f64> {
        if self.rows != 1 || self.cols != 1 {
            return Err(Error::NotScalar { rows: self.rows, cols: self.cols });
        }
        Ok(self.data[0])
    }

    fn same_shape(&self, other: &Matrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    /// Standard matrix product. Inner loops are ordered i-k-j so the
    /// compiler can vectorize over output rows; zero left entries are
    /// skipped, which pays off on sparse coefficient matrices.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0f64; m * n];
        for i in 0..m {
            let arow = &self.data[i * k..(i + 1) * k];
            let orow = &mut out[i * n..(i + 1) * n];
            for (p, &a) in arow.iter().enumerate() {
                if a != 0.0 {
                    let brow = &other.data[p * n..(p + 1) * n];
                    for (o, &b) in orow.iter_mut().zip(brow) {
                        *o += a * b;
                    }
                }
            }
        }
        finish("matmul", m, n, out)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0f64; self.rows * self.cols];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data: out.into(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.same_shape(other, "add")?;
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.same_shape(other, "sub")?;
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.same_shape(other, "hadamard")?;
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Result<Matrix> {
        self.map("scale", |v| v * factor)
    }

    pub fn relu(&self) -> Matrix {
        // max(x, 0) cannot create non-finite values from finite input
        let out: Vec<f64> = self.data.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        Matrix { rows: self.rows, cols: self.cols, data: out.into() }
    }

    /// Row-wise softmax with max subtraction.
    pub fn row_softmax(&self) -> Matrix {
        let mut out = vec![0.0f64; self.rows * self.cols];
        for r in 0..self.rows {
            let row = self.row(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let dst = &mut out[r * self.cols..(r + 1) * self.cols];
            let mut sum = 0.0;
            for (d, &v) in dst.iter_mut().zip(row) {
                *d = (v - m).exp();
                sum += *d;
            }
            for d in dst.iter_mut() {
                *d /= sum;
            }
        }
        Matrix { rows: self.rows, cols: self.cols, data: out.into() }
    }

    /// Entrywise sign(x) * max(|x| - xi, 0).
    pub fn soft_threshold(&self, xi: f64) -> Result<Matrix> {
        if xi < 0.0 || !xi.is_finite() {
            return Err(Error::InvalidParameter { what: "xi", value: xi });
        }
        let out: Vec<f64> = self
            .data
            .iter()
            .map(|&v| {
                let mag = v.abs() - xi;
                if mag > 0.0 {
                    v.signum() * mag
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data: out.into() })
    }

    /// Divides each row by sqrt(mean of squared entries + eps).
    pub fn rms_normalize(&self, eps: f64) -> Result<Matrix> {
        if eps <= 0.0 || !eps.is_finite() {
            return Err(Error::InvalidParameter { what: "eps", value: eps });
        }
        let mut out = vec![0.0f64; self.rows * self.cols];
        let n = self.cols as f64;
        for r in 0..self.rows {
            let row = self.row(r);
            let ms = row.iter().map(|v| v * v).sum::<f64>() / n;
            let inv = 1.0 / (ms + eps).sqrt();
            for (d, &v) in out[r * self.cols..(r + 1) * self.cols].iter_mut().zip(row) {
                *d = v * inv;
            }
        }
        finish("rms_normalize", self.rows, self.cols, out)
    }

    /// Fraction of entries exactly equal to zero.
    pub fn zero_fraction(&self) -> f64 {
        let zeros = self.data.iter().filter(|&&v| v == 0.0).count();
        zeros as f64 / self.data.len() as f64
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// Largest absolute difference to another matrix of the same shape.
    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        self.same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Copy of the row block `[start, start+len)`.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Matrix> {
        if start + len > self.rows || len == 0 {
            return Err(Error::InvalidConfig(format!(
                "row slice {start}..{} out of bounds for {} rows",
                start + len,
                self.rows
            )));
        }
        let data = self.data[start * self.cols..(start + len) * self.cols].to_vec();
        Ok(Matrix { rows: len, cols: self.cols, data: data.into() })
    }

    /// Copy of the column block `[start, start+len)`.
    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Matrix> {
        if start + len > self.cols || len == 0 {
            return Err(Error::InvalidConfig(format!(
                "column slice {start}..{} out of bounds for {} columns",
                start + len,
                self.cols
            )));
        }
        let mut data = Vec::with_capacity(self.rows * len);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..start + len]);
        }
        Ok(Matrix { rows: self.rows, cols: len, data: data.into() })
    }

    /// Vertical concatenation of row blocks.
    pub fn concat_rows(parts: &[&Matrix]) -> Result<Matrix> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("concat_rows"));
        }
        let cols = parts[0].cols;
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    left: (parts[0].rows, cols),
                    right: p.shape(),
                });
            }
            rows += p.rows;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Matrix { rows, cols, data: data.into() })
    }

    fn map(&self, op: &'static str, f: impl Fn(f64) -> f64) -> Result<Matrix> {
        let out: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        finish(op, self.rows, self.cols, out)
    }

    fn zip_with(
        &self,
        other: &Matrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        let out: Vec<f64> = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        finish(op, self.rows, self.cols, out)
    }
}

fn finish(op: &'static str, rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
    if !data.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { op });
    }
    Ok(Matrix { rows, cols, data: data.into() })
}

/// Solves the square system `a * x = b` by Gaussian elimination with
/// partial pivoting. Used for the least-squares lambda recovery.
pub fn solve_linear(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::ShapeMismatch {
            op: "solve_linear",
            left: a.shape(),
            right: (b.len(), 1),
        });
    }
    let mut m: Vec<f64> = a.data().to_vec();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                m[i * n + col]
                    .abs()
                    .partial_cmp(&m[j * n + col].abs())
                    .unwrap()
            })
            .unwrap();
        if m[pivot * n + col].abs() < 1e-300 {
            return Err(Error::InvalidParameter {
                what: "singular system",
                value: m[pivot * n + col],
            });
        }
        if pivot != col {
            for c in 0..n {
                m.swap(col * n + c, pivot * n + c);
            }
            rhs.swap(col, pivot);
        }
        let d = m[col * n + col];
        for row in col + 1..n {
            let factor = m[row * n + col] / d;
            if factor != 0.0 {
                for c in col..n {
                    m[row * n + c] -= factor * m[col * n + c];
                }
                rhs[row] -= factor * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for c in row + 1..n {
            acc -= m[row * n + c] * x[c];
        }
        x[row] = acc / m[row * n + row];
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { op: "solve_linear" });
    }
    Ok(x)
}
