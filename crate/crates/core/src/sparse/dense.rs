use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Small row-major dense matrix. Factorizations go through `nalgebra`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DenseMatrix { n_rows, n_cols, values: vec![0.0; n_rows * n_cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {n_rows}x{n_cols} matrix",
                values.len()
            )));
        }
        Ok(DenseMatrix { n_rows, n_cols, values })
    }

    /// Builds from column vectors of equal length.
    pub fn from_columns(n_rows: usize, cols: &[Vec<f64>]) -> Result<Self> {
        let mut m = Self::zeros(n_rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            if c.len() != n_rows {
                return Err(Error::DimensionMismatch("column length".into()));
            }
            for (i, &v) in c.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = Self::zeros(self.n_cols, self.n_rows);
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_cols != other.n_rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} * {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut c = Self::zeros(self.n_rows, other.n_cols);
        for i in 0..self.n_rows {
            for k in 0..self.n_cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let crow = &mut c.values[i * other.n_cols..(i + 1) * other.n_cols];
                for (cv, &b) in crow.iter_mut().zip(orow) {
                    *cv += a * b;
                }
            }
        }
        Ok(c)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch("dense matvec".into()));
        }
        Ok((0..self.n_rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn add_scaled(&self, alpha: f64, other: &DenseMatrix, beta: f64) -> Result<DenseMatrix> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::DimensionMismatch("dense add".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| alpha * a + beta * b).collect();
        Ok(DenseMatrix { n_rows: self.n_rows, n_cols: self.n_cols, values })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_rows, self.n_cols, &self.values)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let mut d = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                d[(i, j)] = m[(i, j)];
            }
        }
        d
    }

    /// Inverse of a symmetric positive definite matrix via dense Cholesky.
    pub fn spd_inverse(&self) -> Result<DenseMatrix> {
        if self.n_rows != self.n_cols {
            return Err(Error::DimensionMismatch("inverse of a non-square matrix".into()));
        }
        if self.n_rows == 0 {
            return Ok(Self::zeros(0, 0));
        }
        let chol = self
            .to_nalgebra()
            .cholesky()
            .ok_or_else(|| Error::Numerical("dense Cholesky failed: matrix not SPD".into()))?;
        let mut inv = Self::from_nalgebra(&chol.inverse());
        inv.symmetrize_in_place();
        Ok(inv)
    }

    /// Solves `A x = b` for SPD `A`.
    pub fn spd_solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if self.n_rows != self.n_cols || b.len() != self.n_rows {
            return Err(Error::DimensionMismatch("dense solve".into()));
        }
        let chol = self
            .to_nalgebra()
            .cholesky()
            .ok_or_else(|| Error::Numerical("dense Cholesky failed: matrix not SPD".into()))?;
        let x = chol.solve(&nalgebra::DVector::from_column_slice(b));
        Ok(x.iter().copied().collect())
    }

    pub fn symmetrize_in_place(&mut self) {
        for i in 0..self.n_rows {
            for j in (i + 1)..self.n_cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.values[i * self.n_cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.values[i * self.n_cols + j]
    }
}
