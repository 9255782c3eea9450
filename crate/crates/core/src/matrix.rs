//! Minimal row-major matrix for design matrices and covariate samples.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl Matrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { data: vec![0.0; n_rows * n_cols], n_rows, n_cols }
    }

    /// Build from row slices; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::Config(format!(
                    "ragged matrix: row {i} has {} entries, expected {n_cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { data, n_rows, n_cols })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n_cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn column_mean(&self, j: usize) -> f64 {
        if self.n_rows == 0 {
            return f64::NAN;
        }
        self.column(j).iter().sum::<f64>() / self.n_rows as f64
    }

    pub fn column_means(&self) -> Vec<f64> {
        (0..self.n_cols).map(|j| self.column_mean(j)).collect()
    }

    /// New matrix keeping only the given columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        let mut out = Matrix::zeros(self.n_rows, columns.len());
        for (jj, &j) in columns.iter().enumerate() {
            if j >= self.n_cols {
                return Err(Error::Config(format!(
                    "column index {j} out of range for matrix with {} columns",
                    self.n_cols
                )));
            }
            for i in 0..self.n_rows {
                out.set(i, jj, self.get(i, j));
            }
        }
        Ok(out)
    }
}
