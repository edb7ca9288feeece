use serde::{Deserialize, Serialize};

use super::{Ordering, SparseMatrix};
use crate::error::{Error, Result};

/// Lower-triangular factor `L` with `P L Lᵀ Pᵀ ≈ A`.
///
/// `perm[new] = old`, i.e. `(L Lᵀ)[i][j] ≈ A[perm[i]][perm[j]]`. The factor is
/// used as the operator `P L`, so every solve below already honours the
/// permutation.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: SparseMatrix,
    upper: SparseMatrix,
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    complete: bool,
}

/// Which triangular system [`CholeskyFactor::solve`] handles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    /// `(P L) x = b`
    Forward,
    /// `(P L)ᵀ x = b`
    Backward,
    /// `A x = b` with `A = P L Lᵀ Pᵀ`
    Full,
}

impl CholeskyFactor {
    fn new(lower: SparseMatrix, perm: Vec<usize>, complete: bool) -> Self {
        let mut inv_perm = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }
        let upper = lower.transpose();
        CholeskyFactor { lower, upper, perm, inv_perm, complete }
    }

    /// Builds a factor directly from a lower-triangular matrix with a
    /// positive diagonal.
    pub fn from_lower(lower: SparseMatrix, perm: Vec<usize>, complete: bool) -> Result<Self> {
        let n = lower.n_rows();
        if !lower.is_square() || perm.len() != n {
            return Err(Error::DimensionMismatch("factor shape".into()));
        }
        for i in 0..n {
            let (c, v) = lower.row(i);
            if c.last() != Some(&i) || v[v.len() - 1] <= 0.0 {
                return Err(Error::ZeroDiagonal(i));
            }
        }
        Ok(Self::new(lower, perm, complete))
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn lower_triangle(&self) -> &SparseMatrix {
        &self.lower
    }

    /// `Lᵀ` in row form, i.e. the columns of `L`.
    pub fn upper_triangle(&self) -> &SparseMatrix {
        &self.upper
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn inverse_permutation(&self) -> &[usize] {
        &self.inv_perm
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn nnz(&self) -> usize {
        self.lower.nnz()
    }

    pub fn solve(&self, b: &[f64], mode: SolveMode) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "rhs of length {} for factor of dimension {}",
                b.len(),
                self.dim()
            )));
        }
        Ok(match mode {
            SolveMode::Forward => self.forward(b),
            SolveMode::Backward => self.backward(b),
            SolveMode::Full => self.backward(&self.forward(b)),
        })
    }

    /// `(P L)⁻¹ b`.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let (c, v) = self.lower.row(i);
            let last = c.len() - 1;
            let mut s = x[i];
            for k in 0..last {
                s -= v[k] * x[c[k]];
            }
            x[i] = s / v[last];
        }
        x
    }

    /// `(P L)⁻ᵀ b`.
    pub fn backward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = b.to_vec();
        for i in (0..n).rev() {
            let (c, v) = self.upper.row(i);
            let mut s = y[i];
            for k in 1..c.len() {
                s -= v[k] * y[c[k]];
            }
            y[i] = s / v[0];
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }

    /// `(P L) x` without any solve.
    pub fn apply_factor(&self, x: &[f64]) -> Vec<f64> {
        let y = self.lower.spmv(x).expect("dimension checked by caller");
        let mut out = vec![0.0; y.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            out[p] = y[i];
        }
        out
    }

    /// Dense `P L Lᵀ Pᵀ` for verification.
    pub fn reconstruct(&self) -> crate::sparse::DenseMatrix {
        let n = self.dim();
        let l = self.lower.to_dense();
        let mut a = crate::sparse::DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..=j).map(|k| l[(i, k)] * l[(j, k)]).sum();
                a[(self.perm[i], self.perm[j])] = s;
                a[(self.perm[j], self.perm[i])] = s;
            }
        }
        a
    }

    /// Diagonal (Jacobi) factor `L = diag(√a_ii)`.
    pub fn jacobi(a: &SparseMatrix) -> Result<Self> {
        let d = a.diag();
        for (i, &v) in d.iter().enumerate() {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::IncompleteBreakdown { row: i, pivot: v });
            }
        }
        let l = SparseMatrix::diagonal(&d.iter().map(|v| v.sqrt()).collect::<Vec<_>>());
        Ok(Self::new(l, (0..d.len()).collect(), d.len() <= 1))
    }

    /// Block-Jacobi factor: complete Cholesky of each diagonal block. The
    /// blocks must partition `0..n`.
    pub fn block_jacobi(a: &SparseMatrix, blocks: &[Vec<usize>]) -> Result<Self> {
        let n = a.n_rows();
        let mut perm = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        let mut trip = Vec::new();
        for blk in blocks {
            let offset = perm.len();
            for &i in blk {
                if i >= n || seen[i] {
                    return Err(Error::InvalidArgument("blocks must partition the index set".into()));
                }
                seen[i] = true;
            }
            let sub = a.extract_principal_submatrix(blk)?;
            let f = sparse_cholesky(&sub, Ordering::AmdLike)?;
            for (i, j, v) in f.lower.triplets() {
                trip.push((offset + i, offset + j, v));
            }
            perm.extend(f.perm.iter().map(|&p| blk[p]));
        }
        if perm.len() != n {
            return Err(Error::InvalidArgument("blocks must cover every index".into()));
        }
        let l = SparseMatrix::from_triplets(n, n, &trip)?;
        Ok(Self::new(l, perm, blocks.len() <= 1))
    }
}

/// Elimination tree of a symmetric matrix (lower pattern, row-wise).
pub(crate) fn etree(a: &SparseMatrix) -> Vec<usize> {
    let n = a.n_rows();
    let mut parent = vec![usize::MAX; n];
    let mut ancestor = vec![usize::MAX; n];
    for k in 0..n {
        for &j in a.row(k).0 {
            if j >= k {
                break;
            }
            let mut i = j;
            while i != usize::MAX && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == usize::MAX {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of `L` (excluding the diagonal), in
/// topological order: descendants before ancestors.
fn ereach(a: &SparseMatrix, k: usize, parent: &[usize], mark: &mut [usize], out: &mut Vec<usize>) {
    out.clear();
    mark[k] = k;
    let mut path = Vec::new();
    let mut segments: Vec<Vec<usize>> = Vec::new();
    for &j in a.row(k).0 {
        if j >= k {
            break;
        }
        path.clear();
        let mut i = j;
        while mark[i] != k {
            path.push(i);
            mark[i] = k;
            i = parent[i];
        }
        if !path.is_empty() {
            segments.push(path.clone());
        }
    }
    // later segments end at nodes reached by earlier ones, so they must be
    // processed first
    for seg in segments.iter().rev() {
        out.extend_from_slice(seg);
    }
}

/// Complete sparse Cholesky factorization (up-looking).
pub fn sparse_cholesky(a: &SparseMatrix, ordering: Ordering) -> Result<CholeskyFactor> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch("Cholesky of a non-square matrix".into()));
    }
    let n = a.n_rows();
    let perm = ordering.compute(a);
    let c = if ordering == Ordering::Natural { a.clone() } else { a.permute_symmetric(&perm)? };

    let parent = etree(&c);
    let mut mark = vec![usize::MAX; n];
    let mut reach = Vec::new();

    let mut counts = vec![1usize; n];
    for k in 0..n {
        ereach(&c, k, &parent, &mut mark, &mut reach);
        for &j in &reach {
            counts[j] += 1;
        }
    }
    let mut col_ptr = vec![0usize; n + 1];
    for j in 0..n {
        col_ptr[j + 1] = col_ptr[j] + counts[j];
    }
    let nnz = col_ptr[n];
    let mut row_idx = vec![0usize; nnz];
    let mut vals = vec![0.0f64; nnz];
    let mut next = col_ptr.clone();
    let mut x = vec![0.0f64; n];
    let pivot_floor = n.max(16) as f64 * f64::EPSILON;
    mark.iter_mut().for_each(|m| *m = usize::MAX);

    for k in 0..n {
        ereach(&c, k, &parent, &mut mark, &mut reach);
        let (cols, v) = c.row(k);
        for (&j, &a_kj) in cols.iter().zip(v) {
            if j <= k {
                x[j] = a_kj;
            }
        }
        let mut d = x[k];
        let a_kk = d.abs();
        x[k] = 0.0;
        for &i in &reach {
            let lki = x[i] / vals[col_ptr[i]];
            x[i] = 0.0;
            for p in (col_ptr[i] + 1)..next[i] {
                x[row_idx[p]] -= vals[p] * lki;
            }
            d -= lki * lki;
            row_idx[next[i]] = k;
            vals[next[i]] = lki;
            next[i] += 1;
        }
        // pivots at rounding level of the original diagonal mean a singular matrix
        if d <= pivot_floor * a_kk || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { row: perm[k], pivot: d });
        }
        row_idx[next[k]] = k;
        vals[next[k]] = d.sqrt();
        next[k] += 1;
    }
    // column storage of L is row storage of Lᵀ
    let upper = SparseMatrix::from_csr(n, n, col_ptr, row_idx, vals)?;
    let lower = upper.transpose();
    let mut inv_perm = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        inv_perm[old] = new;
    }
    Ok(CholeskyFactor { lower, upper, perm, inv_perm, complete: true })
}

/// Incomplete Cholesky with zero fill-in on the lower pattern of `a`.
pub fn ic0(a: &SparseMatrix) -> Result<CholeskyFactor> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch("IC(0) of a non-square matrix".into()));
    }
    let low = a.lower_triangle();
    let n = low.n_rows();
    let offsets = low.row_offsets().to_vec();
    let cols = low.col_indices().to_vec();
    let mut vals = low.values().to_vec();
    for i in 0..n {
        let (start, end) = (offsets[i], offsets[i + 1]);
        if end == start || cols[end - 1] != i {
            return Err(Error::IncompleteBreakdown { row: i, pivot: 0.0 });
        }
        for p in start..end {
            let j = cols[p];
            // sparse dot of row i and row j over columns < j
            let (mut q, mut r) = (start, offsets[j]);
            let mut s = 0.0;
            while q < p && r < offsets[j + 1] - 1 {
                match cols[q].cmp(&cols[r]) {
                    std::cmp::Ordering::Less => q += 1,
                    std::cmp::Ordering::Greater => r += 1,
                    std::cmp::Ordering::Equal => {
                        s += vals[q] * vals[r];
                        q += 1;
                        r += 1;
                    }
                }
            }
            if j < i {
                vals[p] = (vals[p] - s) / vals[offsets[j + 1] - 1];
            } else {
                let d = vals[p] - s;
                if d <= 0.0 || !d.is_finite() {
                    return Err(Error::IncompleteBreakdown { row: i, pivot: d });
                }
                vals[p] = d.sqrt();
            }
        }
    }
    let l = SparseMatrix::from_csr(n, n, offsets, cols, vals)?;
    Ok(CholeskyFactor::new(l, (0..n).collect(), false))
}

/// IC(0) of `a + σ diag(a)`, with `σ` taken from `0, 1e-3, 4e-3, …` (factor 4)
/// until the factorization succeeds. Returns the factor and the shift used.
pub fn ic0_shifted(a: &SparseMatrix) -> Result<(CholeskyFactor, f64)> {
    let mut last = match ic0(a) {
        Ok(f) => return Ok((f, 0.0)),
        Err(e @ Error::IncompleteBreakdown { .. }) => e,
        Err(e) => return Err(e),
    };
    let d = a.diag();
    let mut sigma = 1e-3;
    while sigma <= 1e3 {
        let shifted = a.add(&SparseMatrix::diagonal(&d.iter().map(|x| sigma * x).collect::<Vec<_>>()))?;
        match ic0(&shifted) {
            Ok(f) => return Ok((f, sigma)),
            Err(e @ Error::IncompleteBreakdown { .. }) => last = e,
            Err(e) => return Err(e),
        }
        sigma *= 4.0;
    }
    Err(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_ar1_precision;

    fn lattice(nx: usize, ny: usize) -> SparseMatrix {
        let mut t = Vec::new();
        let id = |x: usize, y: usize| y * nx + x;
        for y in 0..ny {
            for x in 0..nx {
                t.push((id(x, y), id(x, y), 4.1));
                if x + 1 < nx {
                    t.push((id(x, y), id(x + 1, y), -1.0));
                    t.push((id(x + 1, y), id(x, y), -1.0));
                }
                if y + 1 < ny {
                    t.push((id(x, y), id(x, y + 1), -1.0));
                    t.push((id(x, y + 1), id(x, y), -1.0));
                }
            }
        }
        SparseMatrix::from_triplets(nx * ny, nx * ny, &t).unwrap()
    }

    fn max_reconstruction_error(a: &SparseMatrix, f: &CholeskyFactor) -> f64 {
        let r = f.reconstruct();
        let d = a.to_dense();
        let mut m = 0.0f64;
        for i in 0..a.n_rows() {
            for j in 0..a.n_cols() {
                m = m.max((r[(i, j)] - d[(i, j)]).abs());
            }
        }
        m
    }

    #[test]
    fn diagonal_factor() {
        let a = SparseMatrix::diagonal(&[4.0, 9.0]);
        let f = sparse_cholesky(&a, Ordering::Natural).unwrap();
        assert_eq!(f.lower_triangle().diag(), vec![2.0, 3.0]);
        assert!(f.is_complete());
    }

    #[test]
    fn ar1_reconstruction() {
        let a = build_ar1_precision(0.5, 5).unwrap();
        for ord in [Ordering::Natural, Ordering::AmdLike] {
            let f = sparse_cholesky(&a, ord).unwrap();
            assert!(max_reconstruction_error(&a, &f) <= 1e-12 * a.max_abs());
        }
    }

    #[test]
    fn lattice_reconstruction_with_fill() {
        let a = lattice(6, 5);
        for ord in [Ordering::Natural, Ordering::AmdLike] {
            let f = sparse_cholesky(&a, ord).unwrap();
            assert!(f.nnz() > a.lower_triangle().nnz());
            assert!(max_reconstruction_error(&a, &f) <= 1e-12 * a.max_abs());
        }
    }

    #[test]
    fn semidefinite_breaks_down() {
        let j = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 1.0)])
            .unwrap();
        let err = sparse_cholesky(&j, Ordering::Natural).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
        assert!(err.to_string().contains("not positive definite"));
    }

    #[test]
    fn triangular_solve_modes() {
        let f = sparse_cholesky(&SparseMatrix::identity(3), Ordering::Natural).unwrap();
        let b = [1.5, -2.0, 7.0];
        for m in [SolveMode::Forward, SolveMode::Backward, SolveMode::Full] {
            assert_eq!(f.solve(&b, m).unwrap(), b.to_vec());
        }
        let f = CholeskyFactor::from_lower(SparseMatrix::diagonal(&[2.0, 4.0]), vec![0, 1], true).unwrap();
        assert_eq!(f.solve(&[8.0, 32.0], SolveMode::Full).unwrap(), vec![2.0, 2.0]);
        assert!(f.solve(&[1.0], SolveMode::Full).is_err());
    }

    #[test]
    fn forward_backward_compose_to_inverse() {
        let a = lattice(4, 4);
        let f = sparse_cholesky(&a, Ordering::AmdLike).unwrap();
        let b: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).cos()).collect();
        // (PL)(PL)ᵀ x = b  and  A x = b agree
        let x = f.solve(&b, SolveMode::Full).unwrap();
        let r = a.spmv(&x).unwrap();
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-12);
        }
        // forward is the inverse of apply_factor
        let y = f.apply_factor(&b);
        let z = f.forward(&y);
        for (zi, bi) in z.iter().zip(&b) {
            assert!((zi - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn ic0_diagonal_is_exact() {
        let a = SparseMatrix::diagonal(&[4.0, 9.0, 16.0]);
        let f = ic0(&a).unwrap();
        assert_eq!(f.lower_triangle().diag(), vec![2.0, 3.0, 4.0]);
        assert!(!f.is_complete());
    }

    #[test]
    fn ic0_tridiagonal_equals_complete() {
        let a = build_ar1_precision(0.8, 20).unwrap();
        let inc = ic0(&a).unwrap();
        let com = sparse_cholesky(&a, Ordering::Natural).unwrap();
        for (x, y) in inc.lower_triangle().values().iter().zip(com.lower_triangle().values()) {
            assert!((x - y).abs() < 1e-14);
        }
        assert_eq!(inc.lower_triangle().col_indices(), com.lower_triangle().col_indices());
    }

    #[test]
    fn ic0_lattice_keeps_pattern_and_is_inexact() {
        let a = lattice(6, 6);
        let f = ic0(&a).unwrap();
        assert_eq!(f.lower_triangle().col_indices(), a.lower_triangle().col_indices());
        let r = f.reconstruct();
        let d = a.to_dense();
        let diff: f64 = (0..36)
            .flat_map(|i| (0..36).map(move |j| (i, j)))
            .map(|(i, j)| (r[(i, j)] - d[(i, j)]).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(diff / a.frobenius_norm() > 0.0);
    }

    #[test]
    fn shifted_ic0_survives_breakdown() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 0.9), (1, 0, 0.9), (1, 1, 1.0)]).unwrap();
        let (_, sigma) = ic0_shifted(&a).unwrap();
        assert_eq!(sigma, 0.0);
        let spec = crate::model::SpatialSpec::new(6, 6, 1.0, 0.3, 1.0, 2).unwrap();
        let q = crate::model::build_spatial_precision(&spec).unwrap();
        assert!(ic0(&q).is_err());
        let (f, sigma) = ic0_shifted(&q).unwrap();
        assert!(sigma > 0.0 && !f.is_complete());
    }

    #[test]
    fn ic0_breakdown_reports_row() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)])
            .unwrap();
        match ic0(&a) {
            Err(Error::IncompleteBreakdown { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn block_jacobi_covers_blocks() {
        let a = lattice(4, 2);
        let f = CholeskyFactor::block_jacobi(&a, &[vec![0, 1, 2, 3], vec![4, 5, 6, 7]]).unwrap();
        let x = f.solve(&[1.0; 8], SolveMode::Full).unwrap();
        assert!(x.iter().all(|v| v.is_finite() && *v > 0.0));
        assert!(CholeskyFactor::block_jacobi(&a, &[vec![0, 1]]).is_err());
    }
}
