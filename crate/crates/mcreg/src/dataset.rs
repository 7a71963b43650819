//! Centered design/response pair with the column means that were removed.

use crate::error::{Error, Result};
use crate::linalg::{center_columns, DenseMatrix};

/// Covariates and responses, centered column-wise, with the subtracted means
/// kept so that held-out data can be mapped into the same frame.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DenseMatrix,
    pub y: DenseMatrix,
    pub x_means: Vec<f64>,
    pub y_means: Vec<f64>,
}

impl Dataset {
    /// Centers raw matrices and records their column means.
    pub fn from_raw(x_raw: &DenseMatrix, y_raw: &DenseMatrix) -> Result<Self> {
        if x_raw.rows() != y_raw.rows() {
            return Err(Error::Dimension(format!(
                "covariates have {} rows but responses have {}",
                x_raw.rows(),
                y_raw.rows()
            )));
        }
        let (x, x_means) = center_columns(x_raw)?;
        let (y, y_means) = center_columns(y_raw)?;
        Ok(Dataset {
            x,
            y,
            x_means,
            y_means,
        })
    }

    /// Centers raw matrices with externally supplied means (e.g. training
    /// means applied to a test split, so no information leaks from the test
    /// rows).
    pub fn from_raw_with_means(
        x_raw: &DenseMatrix,
        y_raw: &DenseMatrix,
        x_means: &[f64],
        y_means: &[f64],
    ) -> Result<Self> {
        if x_raw.rows() != y_raw.rows() {
            return Err(Error::Dimension(format!(
                "covariates have {} rows but responses have {}",
                x_raw.rows(),
                y_raw.rows()
            )));
        }
        if x_means.len() != x_raw.cols() || y_means.len() != y_raw.cols() {
            return Err(Error::Dimension(
                "centering means do not match matrix widths".into(),
            ));
        }
        let mut x = x_raw.clone();
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                x.set(i, j, x.get(i, j) - x_means[j]);
            }
        }
        let mut y = y_raw.clone();
        for i in 0..y.rows() {
            for j in 0..y.cols() {
                y.set(i, j, y.get(i, j) - y_means[j]);
            }
        }
        Ok(Dataset {
            x,
            y,
            x_means: x_means.to_vec(),
            y_means: y_means.to_vec(),
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.x.rows()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.x.cols()
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.y.cols()
    }

    /// A single observation centers to all zeros; callers should warn.
    pub fn is_degenerate(&self) -> bool {
        self.n() < 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_raw_centers_and_stores_means() {
        let x = DenseMatrix::new(2, 1, vec![1.0, 3.0]).unwrap();
        let y = DenseMatrix::new(2, 2, vec![0.0, 4.0, 2.0, 6.0]).unwrap();
        let ds = Dataset::from_raw(&x, &y).unwrap();
        assert_eq!(ds.x.entries(), &[-1.0, 1.0]);
        assert_eq!(ds.x_means, vec![2.0]);
        assert_eq!(ds.y_means, vec![1.0, 5.0]);
        assert!(!ds.is_degenerate());
    }

    #[test]
    fn mismatched_rows_rejected() {
        let x = DenseMatrix::new(2, 1, vec![1.0, 3.0]).unwrap();
        let y = DenseMatrix::new(3, 1, vec![0.0, 4.0, 2.0]).unwrap();
        assert!(Dataset::from_raw(&x, &y).is_err());
    }

    #[test]
    fn external_means_apply_verbatim() {
        let x = DenseMatrix::new(1, 1, vec![5.0]).unwrap();
        let y = DenseMatrix::new(1, 1, vec![7.0]).unwrap();
        let ds = Dataset::from_raw_with_means(&x, &y, &[2.0], &[3.0]).unwrap();
        assert_eq!(ds.x.entries(), &[3.0]);
        assert_eq!(ds.y.entries(), &[4.0]);
        assert!(ds.is_degenerate());
    }
}
