//! Minimal dense linear algebra: column centering, Cholesky factorization,
//! SPD inversion, and the matrix norms used by the rest of the crate.
//!
//! Everything is plain row-major `f64` storage. Problem sizes stay in the
//! hundreds-to-low-thousands range, so dense O(q³) factorizations are fine
//! and keep results deterministic across platforms.

use crate::error::{Error, Result};

/// Cholesky pivots at or below this are treated as a positivity failure.
pub const SPD_PIVOT_TOL: f64 = 1e-12;

/// Dense row-major matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major data, validating shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "matrix must be nonempty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / cols,
                col: pos % cols,
            });
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "zero-sized matrix");
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Row `i` as a contiguous slice.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Copies column `j` into a fresh vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Raw row-major entries.
    #[inline]
    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        // ikj order keeps the inner loop contiguous in both inputs.
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let src = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Maximum column absolute sum.
    pub fn one_norm(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j).abs()).sum())
            .fold(0.0, f64::max)
    }

    /// Maximum row absolute sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Subtracts each column mean; returns the centered matrix and the means.
pub fn center_columns(m: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>)> {
    let n = m.rows() as f64;
    let mut means = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (mean, v) in means.iter_mut().zip(m.row(i)) {
            *mean += v;
        }
    }
    for mean in &mut means {
        *mean /= n;
    }
    let mut centered = m.clone();
    for i in 0..m.rows() {
        let row = &mut centered.data[i * m.cols..(i + 1) * m.cols];
        for (v, mean) in row.iter_mut().zip(&means) {
            *v -= mean;
        }
    }
    Ok((centered, means))
}

/// Lower-triangular L with L·Lᵀ = S for symmetric positive definite S.
///
/// Fails with the offending pivot index when a pivot drops to `SPD_PIVOT_TOL`
/// or below.
pub fn cholesky_lower(s: &DenseMatrix) -> Result<DenseMatrix> {
    let n = square_dim(s)?;
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = s.get(j, j);
        for k in 0..j {
            let v = l.get(j, k);
            d -= v * v;
        }
        if d <= SPD_PIVOT_TOL {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let dj = d.sqrt();
        l.set(j, j, dj);
        for i in (j + 1)..n {
            let mut v = s.get(i, j);
            for k in 0..j {
                v -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, v / dj);
        }
    }
    Ok(l)
}

/// Inverse of a symmetric positive definite matrix via its Cholesky factor.
/// The result is exactly symmetric.
pub fn invert_spd(s: &DenseMatrix) -> Result<DenseMatrix> {
    let n = square_dim(s)?;
    let l = cholesky_lower(s)?;
    // Solve L W = I column by column, then Lᵀ S⁻¹ = W.
    let mut inv = DenseMatrix::zeros(n, n);
    let mut w = vec![0.0; n];
    for c in 0..n {
        for v in w.iter_mut() {
            *v = 0.0;
        }
        for i in c..n {
            let mut v = if i == c { 1.0 } else { 0.0 };
            for k in c..i {
                v -= l.get(i, k) * w[k];
            }
            w[i] = v / l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut v = w[i];
            for k in (i + 1)..n {
                v -= l.get(k, i) * inv.get(k, c);
            }
            inv.set(i, c, v / l.get(i, i));
        }
    }
    // Force exact symmetry against round-off.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (inv.get(i, j) + inv.get(j, i));
            inv.set(i, j, v);
            inv.set(j, i, v);
        }
    }
    Ok(inv)
}

fn square_dim(s: &DenseMatrix) -> Result<usize> {
    if s.rows() != s.cols() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            s.rows(),
            s.cols()
        )));
    }
    Ok(s.rows())
}
