//! Selected inversion on the filled Cholesky pattern.
//!
//! With `A = L Lᵀ` and `Z = A⁻¹`, the identity `Z L = L⁻ᵀ` gives, for every
//! `i ≥ j` in the pattern of column `j`,
//!
//! ```text
//! Z_ij = (δ_ij / L_jj − Σ_{k > j, k ∈ col(j)} Z_ik L_kj) / L_jj
//! ```
//!
//! Columns are processed in reverse. All `Z_ik` needed for column `j` lie on
//! the pattern of `L + Lᵀ` (the pattern is closed under the elimination
//! tree), so no entry outside it is ever formed.

use super::{CholeskyFactor, SparseMatrix};
use crate::error::{Error, Result};

/// Entries of `A⁻¹` on the symmetric pattern of the Cholesky factor.
#[derive(Debug, Clone)]
pub struct SelectedInverse {
    /// Upper triangle of `Z` in permuted indexing (row `j` holds column `j`
    /// of the lower triangle).
    upper: SparseMatrix,
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
}

impl SelectedInverse {
    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// `diag(A⁻¹)` in the original ordering.
    pub fn diag(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim()];
        for (new, &old) in self.perm.iter().enumerate() {
            d[old] = self.upper.row(new).1[0];
        }
        d
    }

    /// `(A⁻¹)_ij` if `(i, j)` lies on the computed pattern.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (a, b) = (self.inv_perm[i], self.inv_perm[j]);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (c, v) = self.upper.row(lo);
        c.binary_search(&hi).ok().map(|p| v[p])
    }

    pub fn nnz(&self) -> usize {
        2 * self.upper.nnz() - self.dim()
    }

    /// Computed entries as a full symmetric matrix in the original ordering.
    pub fn to_sparse(&self) -> SparseMatrix {
        let mut t = Vec::with_capacity(self.nnz());
        for (i, j, v) in self.upper.triplets() {
            let (a, b) = (self.perm[i], self.perm[j]);
            t.push((a, b, v));
            if a != b {
                t.push((b, a, v));
            }
        }
        SparseMatrix::from_triplets(self.dim(), self.dim(), &t).expect("indices in range")
    }
}

pub fn takahashi_selected_inverse(factor: &CholeskyFactor) -> Result<SelectedInverse> {
    if !factor.is_complete() {
        return Err(Error::IncompleteFactor);
    }
    let l = factor.upper_triangle(); // row j = column j of L, diagonal first
    let n = l.n_rows();
    let offsets = l.row_offsets();
    let rows = l.col_indices();
    let lv = l.values();
    let mut z = vec![0.0f64; lv.len()];
    // position of row index within the current column pattern, or MAX
    let mut pos = vec![usize::MAX; n];
    let mut acc: Vec<f64> = Vec::new();

    for j in (0..n).rev() {
        let (start, end) = (offsets[j], offsets[j + 1]);
        let ljj = lv[start];
        let pat = &rows[start + 1..end];
        let lcol = &lv[start + 1..end];
        acc.clear();
        acc.resize(pat.len(), 0.0);
        for (t, &i) in pat.iter().enumerate() {
            pos[i] = t;
        }
        // acc[t] = Σ_k Z[pat[t], k] L[k, j] over k ∈ pat
        for (tk, &k) in pat.iter().enumerate() {
            let lkj = lcol[tk];
            let (ks, ke) = (offsets[k], offsets[k + 1]);
            // diagonal Z_kk
            acc[tk] += z[ks] * lkj;
            for p in (ks + 1)..ke {
                let i = rows[p];
                let ti = pos[i];
                if ti != usize::MAX {
                    // Z_ik with i > k contributes to row i (via L_kj) and
                    // to row k (via L_ij)
                    acc[ti] += z[p] * lkj;
                    acc[tk] += z[p] * lcol[ti];
                }
            }
        }
        let mut diag_sum = 0.0;
        for (t, &i) in pat.iter().enumerate() {
            let zij = -acc[t] / ljj;
            z[start + 1 + t] = zij;
            diag_sum += zij * lcol[t];
            pos[i] = usize::MAX;
        }
        z[start] = (1.0 / ljj - diag_sum) / ljj;
    }
    let upper = SparseMatrix::from_csr(n, n, offsets.to_vec(), rows.to_vec(), z)?;
    Ok(SelectedInverse {
        upper,
        perm: factor.permutation().to_vec(),
        inv_perm: factor.inverse_permutation().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_ar1_precision;
    use crate::sparse::{ic0, sparse_cholesky, DenseMatrix, Ordering};

    fn dense_inv(a: &SparseMatrix) -> DenseMatrix {
        a.to_dense().spd_inverse().unwrap()
    }

    #[test]
    fn diagonal_case() {
        let a = SparseMatrix::diagonal(&[2.0, 4.0]);
        let f = sparse_cholesky(&a, Ordering::Natural).unwrap();
        let z = takahashi_selected_inverse(&f).unwrap();
        for (v, t) in z.diag().iter().zip([0.5, 0.25]) {
            assert!((v - t).abs() <= 2.0 * f64::EPSILON * t);
        }
    }

    #[test]
    fn ar1_99_matches_dense_inverse() {
        let a = build_ar1_precision(0.95, 99).unwrap();
        let truth = dense_inv(&a);
        for ord in [Ordering::Natural, Ordering::AmdLike] {
            let z = takahashi_selected_inverse(&sparse_cholesky(&a, ord).unwrap()).unwrap();
            for (i, d) in z.diag().iter().enumerate() {
                assert!((d - truth[(i, i)]).abs() <= 1e-10 * truth[(i, i)]);
            }
            // off-diagonal entries on the pattern are exact too
            for i in 0..98 {
                let v = z.get(i, i + 1).unwrap();
                assert!((v - truth[(i, i + 1)]).abs() <= 1e-10 * truth[(i, i)]);
            }
        }
    }

    #[test]
    fn lattice_8x8_matches_dense_inverse() {
        let spec = crate::model::SpatialSpec::new(8, 8, 1.0, 0.5, 1.0, 2).unwrap();
        let a = crate::model::build_spatial_precision(&spec).unwrap();
        let truth = dense_inv(&a);
        let f = sparse_cholesky(&a, Ordering::AmdLike).unwrap();
        let z = takahashi_selected_inverse(&f).unwrap();
        for (i, d) in z.diag().iter().enumerate() {
            assert!((d - truth[(i, i)]).abs() <= 1e-10 * truth[(i, i)]);
        }
        let full = z.to_sparse();
        for (i, j, v) in full.triplets() {
            assert!((v - truth[(i, j)]).abs() <= 1e-10 * truth[(i, i)].max(truth[(j, j)]));
        }
    }

    #[test]
    fn incomplete_factor_rejected() {
        let a = build_ar1_precision(0.5, 4).unwrap();
        assert!(matches!(
            takahashi_selected_inverse(&ic0(&a).unwrap()),
            Err(Error::IncompleteFactor)
        ));
    }
}
