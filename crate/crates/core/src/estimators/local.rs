use super::{EstimatorSettings, PartitionDiagnostics};
use crate::error::Result;
use crate::sparse::{sparse_cholesky, takahashi_selected_inverse, CholeskyFactor, DenseMatrix, Ordering, SparseMatrix};

/// Direct solver and exact inverse diagonal for a principal submatrix.
/// Blocks up to `dense_cutoff` rows are inverted densely.
pub(crate) enum LocalInverse {
    Dense { inverse: DenseMatrix },
    Sparse { factor: CholeskyFactor, diag: Vec<f64> },
}

impl LocalInverse {
    pub fn new(q: &SparseMatrix, dense_cutoff: usize, ordering: Ordering) -> Result<Self> {
        if q.n_rows() <= dense_cutoff {
            let mut inverse = q.to_dense().spd_inverse()?;
            inverse.symmetrize_in_place();
            return Ok(LocalInverse::Dense { inverse });
        }
        let factor = sparse_cholesky(q, ordering)?;
        let diag = takahashi_selected_inverse(&factor)?.diag();
        Ok(LocalInverse::Sparse { factor, diag })
    }

    pub fn diag(&self) -> Vec<f64> {
        match self {
            LocalInverse::Dense { inverse } => inverse.diag(),
            LocalInverse::Sparse { diag, .. } => diag.clone(),
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            LocalInverse::Dense { inverse } => inverse.matvec(b).expect("dimension fixed at construction"),
            LocalInverse::Sparse { factor, .. } => factor.backward(&factor.forward(b)),
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, LocalInverse::Dense { .. })
    }

    pub fn factor_nnz(&self) -> usize {
        match self {
            LocalInverse::Dense { inverse } => inverse.n_rows() * (inverse.n_rows() + 1) / 2,
            LocalInverse::Sparse { factor, .. } => factor.nnz(),
        }
    }
}

/// A local block `rows` of `Q` together with its coupling to a frontier.
pub(crate) struct Substructure {
    pub rows: Vec<usize>,
    pub frontier: Vec<usize>,
    pub inv: LocalInverse,
    /// `Q[rows, frontier]`
    coupling: SparseMatrix,
    /// Frontier columns with at least one nonzero coupling entry.
    active: Vec<usize>,
}

impl Substructure {
    pub fn new(q: &SparseMatrix, rows: Vec<usize>, frontier: Vec<usize>, s: &EstimatorSettings) -> Result<Self> {
        let inv = LocalInverse::new(&q.extract_principal_submatrix(&rows)?, s.dense_cutoff, s.ordering)?;
        let coupling = q.extract_offdiag_block(&rows, &frontier)?;
        let mut hit = vec![false; frontier.len()];
        for &c in coupling.col_indices() {
            hit[c] = true;
        }
        let active = (0..frontier.len()).filter(|&c| hit[c]).collect();
        Ok(Substructure { rows, frontier, inv, coupling, active })
    }

    pub fn diagnostics(&self, part: usize, owned: usize) -> PartitionDiagnostics {
        PartitionDiagnostics {
            part,
            owned,
            local: self.rows.len(),
            frontier: self.frontier.len(),
            factor_nnz: self.inv.factor_nnz(),
            dense: self.inv.is_dense(),
        }
    }

    /// `Σ_k m_k ⊙ m_k / K` with `m_k = Q_BB⁻¹ Q_BS u_S⁽ᵏ⁾`, samples given
    /// in global indexing.
    pub fn sampled_term(&self, samples: &[Vec<f64>]) -> Vec<f64> {
        let mut acc = vec![0.0; self.rows.len()];
        if self.frontier.is_empty() || samples.is_empty() {
            return acc;
        }
        let mut us = vec![0.0; self.frontier.len()];
        let mut r = vec![0.0; self.rows.len()];
        for u in samples {
            for (x, &g) in us.iter_mut().zip(&self.frontier) {
                *x = u[g];
            }
            self.coupling.spmv_into(&us, &mut r);
            let m = self.inv.solve(&r);
            for (a, mi) in acc.iter_mut().zip(&m) {
                *a += mi * mi;
            }
        }
        let k = samples.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        acc
    }

    /// Columns of `M = Q_BB⁻¹ Q_BS` for the active frontier entries.
    pub fn influence_columns(&self) -> Vec<(usize, Vec<f64>)> {
        let ct = self.coupling.transpose();
        self.active
            .iter()
            .map(|&c| {
                let mut col = vec![0.0; self.rows.len()];
                let (idx, val) = ct.row(c);
                for (&i, &v) in idx.iter().zip(val) {
                    col[i] = v;
                }
                (c, self.inv.solve(&col))
            })
            .collect()
    }

    /// `diag(M Σ_SS Mᵀ)` for the frontier covariance `sigma`.
    pub fn exact_term(&self, sigma: &DenseMatrix) -> Vec<f64> {
        let cols = self.influence_columns();
        let mut out = vec![0.0; self.rows.len()];
        for (a, (ca, ma)) in cols.iter().enumerate() {
            for (cb, mb) in &cols[..=a] {
                let w = if ca == cb { sigma[(*ca, *cb)] } else { 2.0 * sigma[(*ca, *cb)] };
                for i in 0..out.len() {
                    out[i] += w * ma[i] * mb[i];
                }
            }
        }
        out
    }

    /// `Q_SB Q_BB⁻¹ Q_BS` as a dense frontier-sized matrix.
    pub fn schur_contribution(&self) -> DenseMatrix {
        let nf = self.frontier.len();
        let mut c = DenseMatrix::zeros(nf, nf);
        let ct = self.coupling.transpose();
        for (col, m) in self.influence_columns() {
            let v = ct.spmv(&m).expect("dimensions fixed at construction");
            for (row, x) in v.into_iter().enumerate() {
                c[(row, col)] += x;
            }
        }
        c.symmetrize_in_place();
        c
    }
}
