use rayon::prelude::*;

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
///
/// Symmetric matrices always store both triangles; `symmetric` only records
/// that the stored pattern and values are mirror images of each other.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    /// Assembles a matrix from `(row, col, value)` triplets. Duplicates are
    /// summed and entries that sum to exactly zero are dropped.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            if i >= n_rows {
                return Err(Error::IndexOutOfRange { index: i, dim: n_rows });
            }
            if j >= n_cols {
                return Err(Error::IndexOutOfRange { index: j, dim: n_cols });
            }
            sorted.push((i, j, v));
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut rows = Vec::with_capacity(sorted.len());
        let mut k = 0;
        while k < sorted.len() {
            let (i, j, mut v) = sorted[k];
            k += 1;
            while k < sorted.len() && sorted[k].0 == i && sorted[k].1 == j {
                v += sorted[k].2;
                k += 1;
            }
            if v != 0.0 {
                rows.push(i);
                col_indices.push(j);
                values.push(v);
            }
        }
        for &i in &rows {
            row_offsets[i + 1] += 1;
        }
        for i in 0..n_rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        let mut m = SparseMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
            symmetric: false,
        };
        m.symmetric = m.check_symmetric();
        Ok(m)
    }

    /// Builds from raw CSR arrays, validating the structural invariants.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 || row_offsets[0] != 0 {
            return Err(Error::InvalidArgument("row_offsets must have n_rows + 1 entries starting at 0".into()));
        }
        if col_indices.len() != values.len() || *row_offsets.last().unwrap() != values.len() {
            return Err(Error::InvalidArgument("col_indices/values length mismatch".into()));
        }
        for i in 0..n_rows {
            if row_offsets[i] > row_offsets[i + 1] {
                return Err(Error::InvalidArgument("row_offsets must be nondecreasing".into()));
            }
            let cols = &col_indices[row_offsets[i]..row_offsets[i + 1]];
            for w in cols.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::InvalidArgument(format!(
                        "columns of row {i} not strictly increasing"
                    )));
                }
            }
            if let Some(&c) = cols.last() {
                if c >= n_cols {
                    return Err(Error::IndexOutOfRange { index: c, dim: n_cols });
                }
            }
        }
        let mut m = SparseMatrix { n_rows, n_cols, row_offsets, col_indices, values, symmetric: false };
        m.symmetric = m.check_symmetric();
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let trip: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(n, n, &trip).expect("diagonal indices are in range")
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
            symmetric: n_rows == n_cols,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&j, &x)| (i, j, x))
        })
    }

    fn check_symmetric(&self) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        self.triplets().all(|(i, j, v)| self.get(j, i) == v)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for matrix with {} columns",
                x.len(),
                self.n_cols
            )));
        }
        Ok(())
    }

    /// `y = A x`, accumulating each row in ascending column order.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// Unchecked product into a preallocated buffer.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row_dot(i, x);
        }
    }

    #[inline]
    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for p in self.row_offsets[i]..self.row_offsets[i + 1] {
            acc += self.values[p] * x[self.col_indices[p]];
        }
        acc
    }

    /// Row-block parallel product. Each row is reduced sequentially, so the
    /// result is bit-identical to [`spmv`](Self::spmv) for any pool size.
    pub fn par_spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut y = vec![0.0; self.n_rows];
        y.par_chunks_mut(1024).enumerate().for_each(|(b, chunk)| {
            for (k, yi) in chunk.iter_mut().enumerate() {
                *yi = self.row_dot(b * 1024 + k, x);
            }
        });
        Ok(y)
    }

    /// `y = Aᵀ x`.
    pub fn spmv_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_rows {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for transpose of matrix with {} rows",
                x.len(),
                self.n_rows
            )));
        }
        let mut y = vec![0.0; self.n_cols];
        for (i, &xi) in x.iter().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                y[j] += a * xi;
            }
        }
        Ok(y)
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &j in &self.col_indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                cols[next[j]] = i;
                vals[next[j]] = a;
                next[j] += 1;
            }
        }
        SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets: counts,
            col_indices: cols,
            values: vals,
            symmetric: self.symmetric,
        }
    }

    pub fn scale(&self, alpha: f64) -> SparseMatrix {
        if alpha == 0.0 {
            return SparseMatrix::zeros(self.n_rows, self.n_cols);
        }
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= alpha);
        m
    }

    /// `alpha * A + beta * B`.
    pub fn add_scaled(&self, alpha: f64, other: &SparseMatrix, beta: f64) -> Result<SparseMatrix> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} + {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let trip: Vec<_> = self
            .triplets()
            .map(|(i, j, v)| (i, j, alpha * v))
            .chain(other.triplets().map(|(i, j, v)| (i, j, beta * v)))
            .collect();
        SparseMatrix::from_triplets(self.n_rows, self.n_cols, &trip)
    }

    pub fn add(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        self.add_scaled(1.0, other, 1.0)
    }

    /// Sparse-sparse product `A B` (Gustavson row-by-row).
    pub fn matmul(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.n_cols != other.n_rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} * {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut acc = vec![0.0; other.n_cols];
        let mut marker = vec![usize::MAX; other.n_cols];
        let mut row_offsets = vec![0usize; self.n_rows + 1];
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        let mut touched = Vec::new();
        for i in 0..self.n_rows {
            touched.clear();
            let (ca, va) = self.row(i);
            for (&k, &a) in ca.iter().zip(va) {
                let (cb, vb) = other.row(k);
                for (&j, &b) in cb.iter().zip(vb) {
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = 0.0;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                if acc[j] != 0.0 {
                    col_indices.push(j);
                    values.push(acc[j]);
                }
            }
            row_offsets[i + 1] = col_indices.len();
        }
        let mut m = SparseMatrix {
            n_rows: self.n_rows,
            n_cols: other.n_cols,
            row_offsets,
            col_indices,
            values,
            symmetric: false,
        };
        m.symmetric = m.check_symmetric();
        Ok(m)
    }

    /// Scales row `i` by `d[i]`: `diag(d) A`.
    pub fn scale_rows(&self, d: &[f64]) -> Result<SparseMatrix> {
        if d.len() != self.n_rows {
            return Err(Error::DimensionMismatch("row scaling length".into()));
        }
        let trip: Vec<_> = self.triplets().map(|(i, j, v)| (i, j, d[i] * v)).collect();
        SparseMatrix::from_triplets(self.n_rows, self.n_cols, &trip)
    }

    /// Kronecker product `A ⊗ B`.
    pub fn kron(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        let n_rows = self
            .n_rows
            .checked_mul(other.n_rows)
            .ok_or_else(|| Error::IndexOverflow("kron row dimension".into()))?;
        let n_cols = self
            .n_cols
            .checked_mul(other.n_cols)
            .ok_or_else(|| Error::IndexOverflow("kron column dimension".into()))?;
        self.nnz()
            .checked_mul(other.nnz())
            .ok_or_else(|| Error::IndexOverflow("kron nonzero count".into()))?;
        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(self.nnz() * other.nnz());
        let mut values = Vec::with_capacity(self.nnz() * other.nnz());
        for i in 0..self.n_rows {
            let (ca, va) = self.row(i);
            for k in 0..other.n_rows {
                let (cb, vb) = other.row(k);
                for (&j, &a) in ca.iter().zip(va) {
                    for (&l, &b) in cb.iter().zip(vb) {
                        let v = a * b;
                        if v != 0.0 {
                            col_indices.push(j * other.n_cols + l);
                            values.push(v);
                        }
                    }
                }
                row_offsets[i * other.n_rows + k + 1] = col_indices.len();
            }
        }
        let symmetric = self.symmetric && other.symmetric;
        Ok(SparseMatrix { n_rows, n_cols, row_offsets, col_indices, values, symmetric })
    }

    /// Principal submatrix `A[rows, rows]`; `rows` must be sorted and unique.
    pub fn extract_principal_submatrix(&self, rows: &[usize]) -> Result<SparseMatrix> {
        check_index_set(rows, self.n_rows)?;
        let local = local_map(rows, self.n_cols);
        self.gather(rows, &local, rows.len())
    }

    /// Rectangular block `A[rows, cols]` for disjoint sorted index sets.
    pub fn extract_offdiag_block(&self, rows: &[usize], cols: &[usize]) -> Result<SparseMatrix> {
        check_index_set(rows, self.n_rows)?;
        check_index_set(cols, self.n_cols)?;
        let (mut a, mut b) = (0, 0);
        while a < rows.len() && b < cols.len() {
            match rows[a].cmp(&cols[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    return Err(Error::InvalidArgument(format!(
                        "row and column sets overlap at index {}",
                        rows[a]
                    )))
                }
            }
        }
        let local = local_map(cols, self.n_cols);
        self.gather(rows, &local, cols.len())
    }

    fn gather(&self, rows: &[usize], local: &[usize], n_cols: usize) -> Result<SparseMatrix> {
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for &i in rows {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                let lj = local[j];
                if lj != usize::MAX {
                    col_indices.push(lj);
                    values.push(x);
                }
            }
            row_offsets.push(col_indices.len());
        }
        let mut m = SparseMatrix {
            n_rows: rows.len(),
            n_cols,
            row_offsets,
            col_indices,
            values,
            symmetric: false,
        };
        m.symmetric = m.check_symmetric();
        Ok(m)
    }

    /// Symmetric permutation `B[i][j] = A[perm[i]][perm[j]]`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> Result<SparseMatrix> {
        if !self.is_square() || perm.len() != self.n_rows {
            return Err(Error::DimensionMismatch("permutation length".into()));
        }
        let mut inv = vec![usize::MAX; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            if old >= perm.len() || inv[old] != usize::MAX {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
            inv[old] = new;
        }
        let trip: Vec<_> = self.triplets().map(|(i, j, v)| (inv[i], inv[j], v)).collect();
        SparseMatrix::from_triplets(self.n_rows, self.n_cols, &trip)
    }

    /// `(A + Aᵀ) / 2`, exactly symmetric in floating point.
    pub fn symmetrize(&self) -> Result<SparseMatrix> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch("symmetrize needs a square matrix".into()));
        }
        self.add_scaled(0.5, &self.transpose(), 0.5)
    }

    /// Lower triangle including the diagonal.
    pub fn lower_triangle(&self) -> SparseMatrix {
        let trip: Vec<_> = self.triplets().filter(|&(i, j, _)| j <= i).collect();
        SparseMatrix::from_triplets(self.n_rows, self.n_cols, &trip).expect("indices in range")
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> crate::sparse::DenseMatrix {
        let mut d = crate::sparse::DenseMatrix::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.triplets() {
            d[(i, j)] = v;
        }
        d
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

fn check_index_set(idx: &[usize], dim: usize) -> Result<()> {
    for w in idx.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::InvalidArgument("index set must be sorted and unique".into()));
        }
    }
    if let Some(&last) = idx.last() {
        if last >= dim {
            return Err(Error::IndexOutOfRange { index: last, dim });
        }
    }
    Ok(())
}

fn local_map(idx: &[usize], dim: usize) -> Vec<usize> {
    let mut local = vec![usize::MAX; dim];
    for (k, &i) in idx.iter().enumerate() {
        local[i] = k;
    }
    local
}
