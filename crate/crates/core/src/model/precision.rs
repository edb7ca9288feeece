use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Stationary AR(1) precision with unit innovation variance.
pub fn build_ar1_precision(phi: f64, n: usize) -> Result<SparseMatrix> {
    if !(phi.abs() < 1.0) {
        return Err(Error::InvalidArgument(format!("AR(1) coefficient must satisfy |phi| < 1, got {phi}")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("AR(1) needs n >= 2".into()));
    }
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        let d = if i == 0 || i == n - 1 { 1.0 } else { 1.0 + phi * phi };
        t.push((i, i, d));
        if i + 1 < n {
            t.push((i, i + 1, -phi));
            t.push((i + 1, i, -phi));
        }
    }
    SparseMatrix::from_triplets(n, n, &t)
}

/// Whittle-Matérn field on a regular `nx × ny` lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialSpec {
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
    pub kappa: f64,
    pub tau: f64,
    pub alpha: u32,
}

impl SpatialSpec {
    pub fn new(nx: usize, ny: usize, spacing: f64, kappa: f64, tau: f64, alpha: u32) -> Result<Self> {
        let s = SpatialSpec { nx, ny, spacing, kappa, tau, alpha };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::InvalidArgument(format!(
                "lattice must be at least 2x2, got {}x{} (use an AR(1) or file input for chains)",
                self.nx, self.ny
            )));
        }
        if !(self.spacing > 0.0) || !(self.kappa > 0.0) || !(self.tau > 0.0) {
            return Err(Error::InvalidArgument("spacing, kappa and tau must be positive".into()));
        }
        if self.alpha < 1 {
            return Err(Error::InvalidArgument("alpha must be a positive integer".into()));
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }
}

/// 1D lumped mass (`h`, halved at the ends) and stiffness (`1/h` second
/// difference with natural boundaries).
fn fem_1d(n: usize, h: f64) -> (SparseMatrix, SparseMatrix) {
    let mass: Vec<f64> = (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h }).collect();
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        let d = if i == 0 || i == n - 1 { 1.0 } else { 2.0 };
        t.push((i, i, d / h));
        if i + 1 < n {
            t.push((i, i + 1, -1.0 / h));
            t.push((i + 1, i, -1.0 / h));
        }
    }
    (SparseMatrix::diagonal(&mass), SparseMatrix::from_triplets(n, n, &t).expect("in range"))
}

/// Lumped mass `C` (diagonal) and 5-point stiffness `G` on the lattice.
///
/// Nodes are numbered `iy * nx + ix`. `G = G_y ⊗ C_x + C_y ⊗ G_x` equals the
/// P1 stiffness of the right-triangle mesh of the grid.
pub fn lattice_fem(nx: usize, ny: usize, h: f64) -> Result<(SparseMatrix, SparseMatrix)> {
    let (cx, gx) = fem_1d(nx, h);
    let (cy, gy) = fem_1d(ny, h);
    let c = cy.kron(&cx)?;
    let g = gy.kron(&cx)?.add(&cy.kron(&gx)?)?;
    Ok((c, g))
}

/// `τ² C^{1/2}(κ² I + C^{-1/2} G C^{-1/2})^α C^{1/2}` with lumped `C`,
/// evaluated as `τ² H (C⁻¹ H)^{α-1}` with `H = κ² C + G`.
pub fn build_spatial_precision(spec: &SpatialSpec) -> Result<SparseMatrix> {
    spec.validate()?;
    let (c, g) = lattice_fem(spec.nx, spec.ny, spec.spacing)?;
    let h = c.add_scaled(spec.kappa * spec.kappa, &g, 1.0)?;
    let c_inv: Vec<f64> = c.diag().iter().map(|v| 1.0 / v).collect();
    let c_inv_h = h.scale_rows(&c_inv)?;
    let mut q = h.clone();
    for _ in 1..spec.alpha {
        q = q.matmul(&c_inv_h)?.symmetrize()?;
    }
    Ok(q.scale(spec.tau * spec.tau))
}

/// Temporal matrices for `α_t = 1`.
#[derive(Debug, Clone)]
pub struct TemporalMatrices {
    /// Lumped mass: `dt` inside, `dt/2` at the ends.
    pub j0: SparseMatrix,
    /// Boundary term: `1/2` at the first and last node.
    pub j_half: SparseMatrix,
    /// Stiffness: second difference divided by `dt`; positive semi-definite.
    pub j1: SparseMatrix,
}

pub fn build_temporal_matrices(n_t: usize, dt: f64) -> Result<TemporalMatrices> {
    if n_t < 2 {
        return Err(Error::InvalidArgument("n_t must be at least 2".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let (j0, j1) = fem_1d(n_t, dt);
    let j_half = SparseMatrix::from_triplets(n_t, n_t, &[(0, 0, 0.5), (n_t - 1, n_t - 1, 0.5)])?;
    Ok(TemporalMatrices { j0, j_half, j1 })
}

/// Non-separable diffusion space-time model on a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeSpec {
    /// Lattice geometry. `kappa`, `tau` and `alpha` of this field are not
    /// used; the spatial factors take `κ = gamma_s`, `τ = 1`.
    pub spatial: SpatialSpec,
    pub n_t: usize,
    pub dt: f64,
    pub gamma_t: f64,
    pub gamma_s: f64,
    pub gamma_e: f64,
    pub alpha_t: u32,
    pub alpha_s: u32,
    pub alpha_e: u32,
}

impl SpaceTimeSpec {
    /// Critical diffusion `(α_t, α_s, α_e) = (1, 2, 1)`.
    pub fn critical_diffusion(
        nx: usize,
        ny: usize,
        spacing: f64,
        n_t: usize,
        dt: f64,
        gamma_t: f64,
        gamma_s: f64,
        gamma_e: f64,
    ) -> Result<Self> {
        let s = SpaceTimeSpec {
            spatial: SpatialSpec::new(nx, ny, spacing, gamma_s, 1.0, 1)?,
            n_t,
            dt,
            gamma_t,
            gamma_s,
            gamma_e,
            alpha_t: 1,
            alpha_s: 2,
            alpha_e: 1,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.spatial.validate()?;
        if !(self.gamma_t > 0.0 && self.gamma_s > 0.0 && self.gamma_e > 0.0) {
            return Err(Error::InvalidArgument("all gammas must be positive".into()));
        }
        if self.alpha_t < 1 || self.alpha_s < 1 || self.alpha_e < 1 {
            return Err(Error::InvalidArgument("smoothness indices must be positive integers".into()));
        }
        if self.n_t < 2 {
            return Err(Error::InvalidArgument("n_t must be at least 2".into()));
        }
        Ok(())
    }

    pub fn is_critical_diffusion(&self) -> bool {
        (self.alpha_t, self.alpha_s, self.alpha_e) == (1, 2, 1)
    }

    pub fn n_space(&self) -> usize {
        self.spatial.n_nodes()
    }
}

/// User-supplied `J_{α_t,k/2}` and `K_{α_s(α_t−k/2)+α_e}` for `k = 0..=2α_t`.
#[derive(Debug, Clone)]
pub struct SpaceTimeTerms {
    pub temporal: Vec<SparseMatrix>,
    pub spatial: Vec<SparseMatrix>,
}

/// `γ_e² Σ_k γ_t^k J_k ⊗ K_k`.
pub fn sum_of_kronecker_terms(gamma_t: f64, gamma_e: f64, terms: &SpaceTimeTerms) -> Result<SparseMatrix> {
    if terms.temporal.len() != terms.spatial.len() || terms.temporal.is_empty() {
        return Err(Error::InvalidArgument("need one spatial matrix per temporal matrix".into()));
    }
    let mut acc: Option<SparseMatrix> = None;
    for (k, (j, kk)) in terms.temporal.iter().zip(&terms.spatial).enumerate() {
        let term = j.kron(kk)?.scale(gamma_t.powi(k as i32));
        acc = Some(match acc {
            None => term,
            Some(a) => a.add(&term)?,
        });
    }
    Ok(acc.expect("nonempty").scale(gamma_e * gamma_e))
}

/// Space-time precision. The built-in path supports critical diffusion;
/// other smoothness triples need `terms`.
pub fn build_spacetime_precision(spec: &SpaceTimeSpec, terms: Option<&SpaceTimeTerms>) -> Result<SparseMatrix> {
    spec.validate()?;
    let terms = match terms {
        Some(t) => {
            if t.temporal.len() != 2 * spec.alpha_t as usize + 1 {
                return Err(Error::InvalidArgument(format!(
                    "expected {} temporal matrices for alpha_t = {}",
                    2 * spec.alpha_t + 1,
                    spec.alpha_t
                )));
            }
            t.clone()
        }
        None if spec.is_critical_diffusion() => {
            let tm = build_temporal_matrices(spec.n_t, spec.dt)?;
            let k = |alpha: u32| {
                let s = SpatialSpec { kappa: spec.gamma_s, tau: 1.0, alpha, ..spec.spatial.clone() };
                build_spatial_precision(&s)
            };
            SpaceTimeTerms { temporal: vec![tm.j0, tm.j_half, tm.j1], spatial: vec![k(3)?, k(2)?, k(1)?] }
        }
        None => {
            return Err(Error::InvalidArgument(format!(
                "smoothness triple ({}, {}, {}) has no built-in J/K matrices; supply them from files",
                spec.alpha_t, spec.alpha_s, spec.alpha_e
            )))
        }
    };
    sum_of_kronecker_terms(spec.gamma_t, spec.gamma_e, &terms)?.symmetrize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{sparse_cholesky, Ordering};

    #[test]
    fn ar1_white_noise_is_identity() {
        assert_eq!(build_ar1_precision(0.0, 3).unwrap(), SparseMatrix::identity(3));
    }

    #[test]
    fn ar1_two_nodes() {
        let q = build_ar1_precision(0.5, 2).unwrap();
        assert_eq!(q.to_dense().values(), &[1.0, -0.5, -0.5, 1.0]);
    }

    #[test]
    fn ar1_rejects_unit_root() {
        assert!(build_ar1_precision(1.0, 5).is_err());
        assert!(build_ar1_precision(-1.2, 5).is_err());
        assert!(build_ar1_precision(0.5, 1).is_err());
    }

    #[test]
    fn ar1_stationary_variance() {
        let q = build_ar1_precision(0.95, 99).unwrap();
        let inv = q.to_dense().spd_inverse().unwrap();
        let s = 1.0 / (1.0 - 0.95f64 * 0.95);
        for i in 0..99 {
            assert!((inv[(i, i)] - s).abs() < 1e-6 * s);
        }
    }

    #[test]
    fn degenerate_grid_rejected() {
        assert!(SpatialSpec::new(1, 5, 1.0, 1.0, 1.0, 2).is_err());
    }

    #[test]
    fn alpha1_matches_hand_stencil() {
        let spec = SpatialSpec::new(3, 3, 1.0, 0.5, 2.0, 1).unwrap();
        let q = build_spatial_precision(&spec).unwrap();
        let k2 = 0.25;
        let tau2 = 4.0;
        // corner (0,0): mass 1/4, stiffness diag 1, neighbours -1/2
        assert!((q.get(0, 0) - tau2 * (k2 * 0.25 + 1.0)).abs() < 1e-14);
        assert!((q.get(0, 1) - tau2 * -0.5).abs() < 1e-14);
        // edge (1,0): mass 1/2, diag 2, along-edge -1/2, inward -1
        assert!((q.get(1, 1) - tau2 * (k2 * 0.5 + 2.0)).abs() < 1e-14);
        assert!((q.get(1, 4) - tau2 * -1.0).abs() < 1e-14);
        // centre: mass 1, diag 4, neighbours -1
        assert!((q.get(4, 4) - tau2 * (k2 + 4.0)).abs() < 1e-14);
        assert!((q.get(4, 3) - tau2 * -1.0).abs() < 1e-14);
        assert_eq!(q.get(0, 4), 0.0);
        assert!(q.is_symmetric());
    }

    #[test]
    fn alpha2_matches_product_form() {
        let spec = SpatialSpec::new(4, 4, 0.7, 1.3, 1.5, 2).unwrap();
        let q = build_spatial_precision(&spec).unwrap();
        let (c, g) = lattice_fem(4, 4, 0.7).unwrap();
        let (cd, gd) = (c.to_dense(), g.to_dense());
        let n = 16;
        let k2 = 1.3f64 * 1.3;
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    let hik = k2 * cd[(i, k)] + gd[(i, k)];
                    let hkj = k2 * cd[(k, j)] + gd[(k, j)];
                    s += hik * hkj / cd[(k, k)];
                }
                let expect = 1.5 * 1.5 * s;
                assert!((q.get(i, j) - expect).abs() <= 1e-12 * expect.abs().max(1.0));
            }
        }
        sparse_cholesky(&q, Ordering::Natural).unwrap();
    }

    #[test]
    fn bandwidth_grows_with_alpha() {
        let nnz: Vec<usize> = (1..=3)
            .map(|a| build_spatial_precision(&SpatialSpec::new(6, 6, 1.0, 1.0, 1.0, a).unwrap()).unwrap().nnz())
            .collect();
        assert!(nnz[0] < nnz[1] && nnz[1] < nnz[2]);
    }

    #[test]
    fn temporal_matrices() {
        let t = build_temporal_matrices(2, 1.0).unwrap();
        assert_eq!(t.j1.to_dense().values(), &[1.0, -1.0, -1.0, 1.0]);
        let t = build_temporal_matrices(7, 0.5).unwrap();
        let ones = vec![1.0; 7];
        assert!(t.j1.spmv(&ones).unwrap().iter().all(|v| v.abs() < 1e-14));
        let tr: f64 = t.j0.diag().iter().sum();
        assert!((tr - 6.0 * 0.5).abs() < 1e-14);
        assert_eq!(t.j0.nnz(), 7);
        assert_eq!(t.j_half.nnz(), 2);
        assert!(sparse_cholesky(&t.j1, Ordering::Natural).is_err());
    }

    #[test]
    fn spacetime_small_is_spd() {
        let spec = SpaceTimeSpec::critical_diffusion(2, 2, 1.0, 2, 1.0, 1.0, 1.0, 1.0).unwrap();
        let q = build_spacetime_precision(&spec, None).unwrap();
        assert_eq!(q.n_rows(), 8);
        assert!(q.is_symmetric());
        sparse_cholesky(&q, Ordering::Natural).unwrap();
    }

    #[test]
    fn spacetime_gamma_t_limit_is_block_diagonal() {
        let spec = SpaceTimeSpec::critical_diffusion(3, 2, 1.0, 3, 1.0, 1e-300, 0.8, 1.2).unwrap();
        let q = build_spacetime_precision(&spec, None).unwrap();
        let tm = build_temporal_matrices(3, 1.0).unwrap();
        let k3 = build_spatial_precision(&SpatialSpec::new(3, 2, 1.0, 0.8, 1.0, 3).unwrap()).unwrap();
        let expect = tm.j0.kron(&k3).unwrap().scale(1.44);
        for (i, j, v) in expect.triplets() {
            assert!((q.get(i, j) - v).abs() <= 1e-12 * v.abs());
        }
        let ns = 6;
        for (i, j, _) in q.triplets() {
            assert_eq!(i / ns, j / ns);
        }
    }

    #[test]
    fn unsupported_triple_requires_terms() {
        let mut spec = SpaceTimeSpec::critical_diffusion(2, 2, 1.0, 3, 1.0, 1.0, 1.0, 1.0).unwrap();
        spec.alpha_s = 1;
        assert!(build_spacetime_precision(&spec, None).is_err());
        let tm = build_temporal_matrices(3, 1.0).unwrap();
        let k = SparseMatrix::identity(4);
        let terms = SpaceTimeTerms { temporal: vec![tm.j0, tm.j_half, tm.j1], spatial: vec![k.clone(), k.clone(), k] };
        let q = build_spacetime_precision(&spec, Some(&terms)).unwrap();
        assert_eq!(q.n_rows(), 12);
    }
}
