//! Dense brute-force references and theoretical error laws.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{LatentModel, SlabLayout};
use crate::partition::{Graph, UNREACHABLE};
use crate::sparse::{DenseMatrix, SparseMatrix};

pub const DEFAULT_ORACLE_LIMIT: usize = 5000;
pub const ORACLE_LIMIT_ENV: &str = "GMRF_ORACLE_LIMIT";

/// Size cap for dense references, from `GMRF_ORACLE_LIMIT` if set.
pub fn oracle_limit() -> Result<usize> {
    match std::env::var(ORACLE_LIMIT_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{ORACLE_LIMIT_ENV} must be a count, got '{v}'"))),
        Err(_) => Ok(DEFAULT_ORACLE_LIMIT),
    }
}

fn check_limit(n: usize, limit: usize) -> Result<()> {
    if n > limit {
        return Err(Error::OracleLimit { size: n, limit });
    }
    Ok(())
}

fn to_dense(q: &SparseMatrix) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(q.n_rows(), q.n_cols());
    for (i, j, v) in q.triplets() {
        m[(i, j)] += v;
    }
    m
}

fn invert_spd(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = m
        .cholesky()
        .ok_or_else(|| Error::Numerical("oracle: dense Cholesky failed".into()))?
        .inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// `diag(Q⁻¹)` by full dense inversion, capped at [`oracle_limit`].
pub fn dense_inverse_diag(q: &SparseMatrix) -> Result<Vec<f64>> {
    dense_inverse_diag_with_limit(q, oracle_limit()?)
}

pub fn dense_inverse_diag_with_limit(q: &SparseMatrix, limit: usize) -> Result<Vec<f64>> {
    check_limit(q.n_rows(), limit)?;
    Ok(invert_spd(to_dense(q))?.diagonal().iter().copied().collect())
}

/// Dense inverse as a [`DenseMatrix`], capped at [`oracle_limit`].
pub fn dense_inverse(q: &SparseMatrix) -> Result<DenseMatrix> {
    check_limit(q.n_rows(), oracle_limit()?)?;
    Ok(DenseMatrix::from_nalgebra(&invert_spd(to_dense(q))?))
}

/// Joint posterior of `x = (u, β)` computed densely.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub dense_inverse: DenseMatrix,
    pub exact_diag: Vec<f64>,
    pub exact_mu: Vec<f64>,
}

/// `Q = Q_x + τ_y AᵀA`, `μ = Q⁻¹ τ_y Aᵀ y` with `A = [A_u A_β]` and
/// `Q_x = blockdiag(Q_u, Q_β)`, all assembled densely.
pub fn dense_posterior(model: &LatentModel) -> Result<OracleResult> {
    model.validate()?;
    let (n, nb, m) = (model.n_latent(), model.n_beta(), model.n_obs());
    let dim = n + nb;
    check_limit(dim, oracle_limit()?)?;
    let mut a = DMatrix::zeros(m, dim);
    for (i, j, v) in model.a_u.triplets() {
        a[(i, j)] += v;
    }
    for i in 0..m {
        for k in 0..nb {
            a[(i, n + k)] = model.a_beta[(i, k)];
        }
    }
    let mut q = a.transpose() * &a * model.tau_y;
    for (i, j, v) in model.q_u.triplets() {
        q[(i, j)] += v;
    }
    for (i, j, v) in model.q_beta.triplets() {
        q[(n + i, n + j)] += v;
    }
    let rhs = a.transpose() * DVector::from_column_slice(&model.y) * model.tau_y;
    let inv = invert_spd(q)?;
    let mu = &inv * rhs;
    Ok(OracleResult {
        exact_diag: inv.diagonal().iter().copied().collect(),
        exact_mu: mu.iter().copied().collect(),
        dense_inverse: DenseMatrix::from_nalgebra(&inv),
    })
}

/// `φ^{2l} √(2/K)`: relative RMSE of Monte Carlo (`l = 0`) and overlapping
/// RBMC variance estimates on a stationary AR(1).
pub fn rbmc_rmse_theory(phi: f64, k: usize, l: usize) -> f64 {
    phi.powi(2 * l as i32) * (2.0 / k as f64).sqrt()
}

/// Largest `|corr(x_i, x_j)|` over `j ∈ sources` and nodes `i` at each hop
/// distance `d = 0, 1, …` from `sources`, from the dense inverse. A guide
/// for choosing the overlap depth.
pub fn correlation_decay(q: &SparseMatrix, graph: &Graph, sources: &[usize]) -> Result<Vec<f64>> {
    if graph.n() != q.n_rows() {
        return Err(Error::DimensionMismatch("graph does not match Q".into()));
    }
    if let Some(&v) = sources.iter().find(|&&v| v >= graph.n()) {
        return Err(Error::IndexOutOfRange { index: v, dim: graph.n() });
    }
    check_limit(q.n_rows(), oracle_limit()?)?;
    let sigma = invert_spd(to_dense(q))?;
    let dist = graph.hop_distances(sources);
    let far = dist.iter().copied().filter(|&d| d != UNREACHABLE).max().unwrap_or(0);
    let mut out = vec![0.0f64; if sources.is_empty() { 0 } else { far + 1 }];
    for (i, &d) in dist.iter().enumerate() {
        if d == UNREACHABLE {
            continue;
        }
        for &j in sources {
            let r = sigma[(i, j)] / (sigma[(i, i)] * sigma[(j, j)]).sqrt();
            out[d] = out[d].max(r.abs());
        }
    }
    Ok(out)
}

/// Uncentered second moments `(1/K) Σ x xᵀ`.
pub fn empirical_covariance(samples: &[Vec<f64>]) -> Result<DenseMatrix> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("empirical covariance needs K >= 2".into()));
    }
    let n = samples[0].len();
    if samples.iter().any(|s| s.len() != n) {
        return Err(Error::DimensionMismatch("samples of different lengths".into()));
    }
    let x = DMatrix::from_fn(n, samples.len(), |i, k| samples[k][i]);
    let c = &x * x.transpose() / samples.len() as f64;
    Ok(DenseMatrix::from_nalgebra(&((&c + c.transpose()) * 0.5)))
}

/// `diag(Q⁻¹)` for a precision that is block tridiagonal over time slabs,
/// by recursive Green's functions on dense `n_s × n_s` blocks:
///
/// ```text
/// G_0 = D_0⁻¹,  G_t = (D_t − B_{t−1}ᵀ G_{t−1} B_{t−1})⁻¹
/// Σ_{T−1} = G_{T−1},  Σ_t = G_t + G_t B_t Σ_{t+1} B_tᵀ G_t
/// ```
///
/// with `D_t = Q[t, t]` and `B_t = Q[t, t+1]`. Memory is `O(n_t n_s²)`.
pub fn block_tridiagonal_inverse_diag(q: &SparseMatrix, layout: SlabLayout) -> Result<Vec<f64>> {
    let (ns, nt) = (layout.n_s, layout.n_t);
    if q.n_rows() != layout.n() || !q.is_square() {
        return Err(Error::DimensionMismatch("layout does not match Q".into()));
    }
    let mut d = vec![DMatrix::<f64>::zeros(ns, ns); nt];
    let mut b = vec![DMatrix::<f64>::zeros(ns, ns); nt.saturating_sub(1)];
    for (i, j, v) in q.triplets() {
        let (ti, tj) = (i / ns, j / ns);
        match tj as isize - ti as isize {
            0 => d[ti][(i % ns, j % ns)] += v,
            1 => b[ti][(i % ns, j % ns)] += v,
            -1 => {}
            _ => return Err(Error::InvalidArgument(format!("entry ({i}, {j}) couples non-adjacent slabs"))),
        }
    }
    let mut g: Vec<DMatrix<f64>> = Vec::with_capacity(nt);
    for t in 0..nt {
        let mut m = d[t].clone();
        if t > 0 {
            m -= b[t - 1].transpose() * &g[t - 1] * &b[t - 1];
        }
        g.push(invert_spd(m)?);
    }
    let mut out = vec![0.0; q.n_rows()];
    let mut sigma = g[nt - 1].clone();
    for i in 0..ns {
        out[(nt - 1) * ns + i] = sigma[(i, i)];
    }
    for t in (0..nt - 1).rev() {
        let gb = &g[t] * &b[t];
        let next = &g[t] + &gb * &sigma * gb.transpose();
        sigma = (&next + next.transpose()) * 0.5;
        for i in 0..ns {
            out[t * ns + i] = sigma[(i, i)];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_ar1_precision, build_spacetime_precision, random_latent_model, SpaceTimeSpec};

    #[test]
    fn trivial_inverses() {
        assert_eq!(dense_inverse_diag(&SparseMatrix::identity(4)).unwrap(), vec![1.0; 4]);
        let d = dense_inverse_diag(&SparseMatrix::diagonal(&[2.0, 4.0])).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-15 && (d[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn ar1_interior_is_stationary_variance() {
        let d = dense_inverse_diag(&build_ar1_precision(0.95, 99).unwrap()).unwrap();
        let stat = 1.0 / (1.0 - 0.95f64 * 0.95);
        assert!((d[49] - stat).abs() < 1e-6 * stat);
        assert!(d.iter().all(|&v| v > 0.0 && v <= stat * (1.0 + 1e-12)));
    }

    #[test]
    fn ar1_correlation_decays_geometrically() {
        let q = build_ar1_precision(0.9, 60).unwrap();
        let g = crate::partition::graph_from_precision(&q).unwrap();
        let c = correlation_decay(&q, &g, &[30]).unwrap();
        assert_eq!(c.len(), 31);
        assert!((c[0] - 1.0).abs() < 1e-12);
        for (d, v) in c.iter().enumerate().take(10) {
            assert!((v - 0.9f64.powi(d as i32)).abs() < 1e-10);
        }
        assert!(correlation_decay(&q, &g, &[]).unwrap().is_empty());
    }

    #[test]
    fn size_limit() {
        let q = SparseMatrix::identity(10);
        assert!(matches!(dense_inverse_diag_with_limit(&q, 9), Err(Error::OracleLimit { size: 10, limit: 9 })));
    }

    #[test]
    fn scalar_posterior() {
        let m = LatentModel::direct_observation(SparseMatrix::identity(1), 1.0, vec![2.0]).unwrap();
        let r = dense_posterior(&m).unwrap();
        assert!((r.exact_mu[0] - 1.0).abs() < 1e-15);
        assert!((r.exact_diag[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn no_data_posterior_is_prior() {
        let q = build_ar1_precision(0.8, 20).unwrap();
        let m = LatentModel::direct_observation(q.clone(), 0.0, vec![0.0; 20]).unwrap();
        let r = dense_posterior(&m).unwrap();
        let d = dense_inverse_diag(&q).unwrap();
        for (a, b) in r.exact_diag.iter().zip(&d) {
            assert!((a - b).abs() <= 1e-13 * b);
        }
        let r = dense_posterior(&random_latent_model(30, 2, 3).unwrap()).unwrap();
        assert_eq!(r.exact_diag.len(), 32);
    }

    #[test]
    fn theory_values() {
        assert!((rbmc_rmse_theory(0.95, 10, 0) - 0.2f64.sqrt()).abs() < 1e-15);
        assert!((rbmc_rmse_theory(0.95, 10, 10) - 0.1604).abs() < 1e-4);
        assert!(rbmc_rmse_theory(0.95, usize::MAX, 0) < 1e-9);
    }

    #[test]
    fn empirical_covariance_cases() {
        let e1 = vec![1.0, 0.0, 0.0];
        let c = empirical_covariance(&[e1.clone(), e1.clone(), e1]).unwrap();
        assert_eq!(c[(0, 0)], 1.0);
        assert_eq!(c.values().iter().filter(|&&v| v != 0.0).count(), 1);
        assert!(empirical_covariance(&[vec![1.0]]).is_err());
        let c = empirical_covariance(&[vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap();
        assert_eq!(c[(0, 1)], c[(1, 0)]);
    }

    #[test]
    fn empirical_covariance_converges_for_diagonal_q() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let q = [2.0f64, 5.0];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut err = Vec::new();
        let mut samples = Vec::new();
        for k in [100, 10_000, 100_000] {
            while samples.len() < k {
                let x: Vec<f64> = q
                    .iter()
                    .map(|&qi| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z / qi.sqrt()
                    })
                    .collect();
                samples.push(x);
            }
            let c = empirical_covariance(&samples).unwrap();
            err.push((c[(0, 0)] * q[0] - 1.0).abs().max((c[(1, 1)] * q[1] - 1.0).abs()));
        }
        assert!(err[2] < 0.02, "{err:?}");
    }

    #[test]
    fn block_tridiagonal_matches_dense() {
        let spec = SpaceTimeSpec::critical_diffusion(3, 4, 1.0, 6, 1.0, 1.0, 0.5, 1.0).unwrap();
        let q = build_spacetime_precision(&spec, None).unwrap();
        let q = q.add(&SparseMatrix::identity(q.n_rows())).unwrap();
        let a = block_tridiagonal_inverse_diag(&q, SlabLayout { n_s: 12, n_t: 6 }).unwrap();
        let b = dense_inverse_diag(&q).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12 * y);
        }
        let ar = build_ar1_precision(0.9, 40).unwrap();
        let a = block_tridiagonal_inverse_diag(&ar, SlabLayout { n_s: 1, n_t: 40 }).unwrap();
        let b = dense_inverse_diag(&ar).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12 * y);
        }
    }
}
