//! Posterior mean by fixed-effects Schur elimination, marginal variances with
//! the fixed-effects correction, and the trace building block of
//! log-determinant derivatives.

use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Mutex;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{build_preconditioner, EstimatorSettings, IterationSummary, MarginalResult};
use crate::krylov::{cg_solve, SolveReport};
use crate::model::{assemble_posterior_blocks, LatentModel, PosteriorBlocks};
use crate::sparse::{CholeskyFactor, DenseMatrix, SelectedInverse, SparseMatrix};

/// Preconditioned CG solves with `Q_uu` that count themselves.
pub struct QuuSolver<'a> {
    q: &'a SparseMatrix,
    precond: CholeskyFactor,
    rtol: f64,
    maxit: usize,
    count: AtomicUsize,
    reports: Mutex<Vec<SolveReport>>,
}

impl<'a> QuuSolver<'a> {
    pub fn new(q: &'a SparseMatrix, s: &EstimatorSettings) -> Result<Self> {
        Ok(QuuSolver {
            q,
            precond: build_preconditioner(q, s.precond, None)?,
            rtol: s.cg_rtol,
            maxit: s.cg_maxit,
            count: AtomicUsize::new(0),
            reports: Mutex::new(Vec::new()),
        })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.count.fetch_add(1, AtomicOrdering::Relaxed);
        let (x, rep) = cg_solve(self.q, Some(&self.precond), b, self.rtol, self.maxit)?;
        self.reports.lock().expect("report lock").push(rep);
        if !rep.converged {
            return Err(Error::NotConverged(format!(
                "CG with Q_uu stopped at relative residual {:e} after {} iterations",
                rep.final_residual, rep.iterations
            )));
        }
        Ok(x)
    }

    pub fn solves(&self) -> usize {
        self.count.load(AtomicOrdering::Relaxed)
    }

    pub fn reports(&self) -> Vec<SolveReport> {
        self.reports.lock().expect("report lock").clone()
    }
}

#[derive(Debug, Clone)]
pub struct PosteriorMean {
    pub mu_u: Vec<f64>,
    pub mu_beta: Vec<f64>,
    /// `V(β) = S⁻¹` with `S = Q_ββ − Q_βu Q_uu⁻¹ Q_uβ`.
    pub s_inv: DenseMatrix,
    /// Number of sparse solves with `Q_uu`.
    pub solves: usize,
    pub reports: Vec<SolveReport>,
}

/// `μ_β = S⁻¹(A_βᵀQ_y y − Q_βu Q_uu⁻¹ A_uᵀQ_y y)` and
/// `μ_u = Q_uu⁻¹(A_uᵀQ_y y − Q_uβ μ_β)`.
///
/// Uses `n_β + 2` solves with `Q_uu`; without fixed effects the first and
/// last solve coincide and only one is made.
pub fn posterior_mean(model: &LatentModel, s: &EstimatorSettings) -> Result<PosteriorMean> {
    let blocks = assemble_posterior_blocks(model)?;
    posterior_mean_with(model, &blocks, s)
}

pub fn posterior_mean_with(model: &LatentModel, blocks: &PosteriorBlocks, s: &EstimatorSettings) -> Result<PosteriorMean> {
    let solver = QuuSolver::new(&blocks.q_uu, s)?;
    let qy: Vec<f64> = model.y.iter().map(|y| model.tau_y * y).collect();
    let b_u = model.a_u.spmv_transpose(&qy)?;
    let n_beta = model.n_beta();
    if n_beta == 0 {
        let mu_u = solver.solve(&b_u)?;
        return Ok(PosteriorMean {
            mu_u,
            mu_beta: Vec::new(),
            s_inv: DenseMatrix::zeros(0, 0),
            solves: solver.solves(),
            reports: solver.reports(),
        });
    }
    let b_beta = model.a_beta.transpose().matvec(&qy)?;
    let v = solver.solve(&b_u)?;
    let w = influence_matrix(&solver, &blocks.q_ubeta)?;
    let q_betau = blocks.q_ubeta.transpose();
    let schur = blocks.q_betabeta.add_scaled(1.0, &q_betau.matmul(&w)?, -1.0)?;
    let mut schur = schur;
    schur.symmetrize_in_place();
    let s_inv = schur
        .spd_inverse()
        .map_err(|_| Error::Numerical("fixed-effects Schur complement is not positive definite".into()))?;
    let qv = q_betau.matvec(&v)?;
    let rhs: Vec<f64> = b_beta.iter().zip(&qv).map(|(a, b)| a - b).collect();
    let mu_beta = s_inv.matvec(&rhs)?;
    let shift = blocks.q_ubeta.matvec(&mu_beta)?;
    let rhs_u: Vec<f64> = b_u.iter().zip(&shift).map(|(a, b)| a - b).collect();
    let mu_u = solver.solve(&rhs_u)?;
    Ok(PosteriorMean { mu_u, mu_beta, s_inv, solves: solver.solves(), reports: solver.reports() })
}

/// `W = Q_uu⁻¹ Q_uβ`, one solve per column.
fn influence_matrix(solver: &QuuSolver<'_>, q_ubeta: &DenseMatrix) -> Result<DenseMatrix> {
    let cols: Vec<Vec<f64>> = (0..q_ubeta.n_cols())
        .map(|j| solver.solve(&q_ubeta.column(j)))
        .collect::<Result<_>>()?;
    DenseMatrix::from_columns(q_ubeta.n_rows(), &cols)
}

/// `diag(V(u)) = diag(Q_uu⁻¹) + diag(W S⁻¹ Wᵀ)` with `W = Q_uu⁻¹ Q_uβ`.
pub fn marginal_variance(
    model: &LatentModel,
    diag_quu_inv: &MarginalResult,
    s_inv: &DenseMatrix,
    s: &EstimatorSettings,
) -> Result<Vec<f64>> {
    let blocks = assemble_posterior_blocks(model)?;
    marginal_variance_with(&blocks, diag_quu_inv, s_inv, s)
}

pub fn marginal_variance_with(
    blocks: &PosteriorBlocks,
    diag_quu_inv: &MarginalResult,
    s_inv: &DenseMatrix,
    s: &EstimatorSettings,
) -> Result<Vec<f64>> {
    let n = blocks.q_uu.n_rows();
    let n_beta = blocks.q_ubeta.n_cols();
    if diag_quu_inv.n() != n {
        return Err(Error::DimensionMismatch(format!("variance of length {} for n = {n}", diag_quu_inv.n())));
    }
    if s_inv.n_rows() != n_beta || s_inv.n_cols() != n_beta {
        return Err(Error::DimensionMismatch(format!(
            "S_inv is {}x{} but there are {n_beta} fixed effects",
            s_inv.n_rows(),
            s_inv.n_cols()
        )));
    }
    let mut var = diag_quu_inv.diag_variance.clone();
    if n_beta == 0 {
        return Ok(var);
    }
    let solver = QuuSolver::new(&blocks.q_uu, s)?;
    let w = influence_matrix(&solver, &blocks.q_ubeta)?;
    let ws = w.matmul(s_inv)?;
    for (i, v) in var.iter_mut().enumerate() {
        let corr: f64 = ws.row(i).iter().zip(w.row(i)).map(|(a, b)| a * b).sum();
        *v += corr;
    }
    Ok(var)
}

/// `tr(Q⁻¹ dQ) = Σ_ij (Q⁻¹)_ij (dQ)_ij` over the stored entries of `dQ`.
pub fn trace_inv_times(selected: &SelectedInverse, dq: &SparseMatrix) -> Result<f64> {
    if dq.n_rows() != selected.dim() || dq.n_cols() != selected.dim() {
        return Err(Error::DimensionMismatch("dQ does not match the selected inverse".into()));
    }
    let mut sum = 0.0;
    let mut missing: Vec<(usize, usize)> = Vec::new();
    for (i, j, v) in dq.triplets() {
        match selected.get(i, j) {
            Some(z) => sum += z * v,
            None if v == 0.0 => {}
            None => missing.push((i, j)),
        }
    }
    if let Some(&(row, col)) = missing.first() {
        return Err(Error::PatternNotCovered { row, col, more: missing.len() - 1 });
    }
    Ok(sum)
}

/// Posterior means and marginal standard deviations.
#[derive(Debug, Clone, Serialize)]
pub struct PosteriorSummary {
    pub mu_u: Vec<f64>,
    pub mu_beta: Vec<f64>,
    pub var_u: Vec<f64>,
    pub s_inv: Vec<Vec<f64>>,
    pub solves: IterationSummary,
}

impl PosteriorSummary {
    pub fn new(mean: &PosteriorMean, var_u: Vec<f64>) -> Self {
        PosteriorSummary {
            mu_u: mean.mu_u.clone(),
            mu_beta: mean.mu_beta.clone(),
            var_u,
            s_inv: (0..mean.s_inv.n_rows()).map(|i| mean.s_inv.row(i).to_vec()).collect(),
            solves: IterationSummary::from_reports(&mean.reports),
        }
    }

    /// `node_id,mean,sd`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("node_id,mean,sd\n");
        for (i, (m, v)) in self.mu_u.iter().zip(&self.var_u).enumerate() {
            s.push_str(&format!("{i},{m:e},{:e}\n", v.sqrt()));
        }
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "v": 1,
            "n": self.mu_u.len(),
            "mu_beta": self.mu_beta,
            "sd_beta": (0..self.mu_beta.len()).map(|i| self.s_inv[i][i].sqrt()).collect::<Vec<_>>(),
            "S_inv": self.s_inv,
            "solves": self.solves,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::PrecondKind;
    use crate::model::{build_ar1_precision, random_latent_model};
    use crate::sparse::{sparse_cholesky, takahashi_selected_inverse, Ordering};

    fn tight() -> EstimatorSettings {
        EstimatorSettings { cg_rtol: 1e-13, ..Default::default() }
    }

    fn scalar(with_covariate: bool) -> LatentModel {
        let (q_beta, a_beta) = if with_covariate {
            (SparseMatrix::diagonal(&[0.5]), DenseMatrix::from_row_major(1, 1, vec![1.0]).unwrap())
        } else {
            (SparseMatrix::zeros(0, 0), DenseMatrix::zeros(1, 0))
        };
        LatentModel {
            q_u: SparseMatrix::identity(1),
            q_beta,
            a_u: SparseMatrix::identity(1),
            a_beta,
            tau_y: 1.0,
            y: vec![2.0],
            layout: None,
        }
    }

    /// Full block precision and right-hand side, assembled densely.
    fn dense_system(m: &LatentModel) -> (DenseMatrix, Vec<f64>) {
        let b = assemble_posterior_blocks(m).unwrap();
        let (n, nb) = (m.n_latent(), m.n_beta());
        let mut q = DenseMatrix::zeros(n + nb, n + nb);
        let quu = b.q_uu.to_dense();
        for i in 0..n {
            for j in 0..n {
                q[(i, j)] = quu[(i, j)];
            }
            for k in 0..nb {
                q[(i, n + k)] = b.q_ubeta[(i, k)];
                q[(n + k, i)] = b.q_ubeta[(i, k)];
            }
        }
        for k in 0..nb {
            for l in 0..nb {
                q[(n + k, n + l)] = b.q_betabeta[(k, l)];
            }
        }
        let qy: Vec<f64> = m.y.iter().map(|y| m.tau_y * y).collect();
        let mut rhs = m.a_u.spmv_transpose(&qy).unwrap();
        rhs.extend(m.a_beta.transpose().matvec(&qy).unwrap());
        (q, rhs)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn scalar_model_mean() {
        let r = posterior_mean(&scalar(false), &tight()).unwrap();
        assert!((r.mu_u[0] - 1.0).abs() < 1e-14);
        assert_eq!(r.solves, 1);
    }

    #[test]
    fn scalar_model_with_covariate_matches_dense() {
        let m = scalar(true);
        let r = posterior_mean(&m, &tight()).unwrap();
        assert_eq!(r.solves, 3);
        let (q, rhs) = dense_system(&m);
        let cov = q.spd_inverse().unwrap();
        let mu = q.spd_solve(&rhs).unwrap();
        assert!(rel(r.mu_u[0], mu[0]) < 1e-12);
        assert!(rel(r.mu_beta[0], mu[1]) < 1e-12);
        let d = MarginalResult::new("takahashi", vec![0.5], 0, 0);
        let v = marginal_variance(&m, &d, &r.s_inv, &tight()).unwrap();
        assert!((v[0] - cov[(0, 0)]).abs() <= 1e-10 * cov[(0, 0)]);
    }

    #[test]
    fn random_model_matches_dense_block_solve() {
        for precond in [PrecondKind::Ic0, PrecondKind::Cholesky] {
            let m = random_latent_model(60, 3, 11).unwrap();
            let s = EstimatorSettings { precond, ..tight() };
            let r = posterior_mean(&m, &s).unwrap();
            assert_eq!(r.solves, 5);
            let (q, rhs) = dense_system(&m);
            let mu = q.spd_solve(&rhs).unwrap();
            let scale = mu.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            for (a, b) in r.mu_u.iter().chain(&r.mu_beta).zip(&mu) {
                assert!((a - b).abs() <= 1e-8 * scale);
            }
            let blocks = assemble_posterior_blocks(&m).unwrap();
            let f = sparse_cholesky(&blocks.q_uu, Ordering::AmdLike).unwrap();
            let d = MarginalResult::new("takahashi", takahashi_selected_inverse(&f).unwrap().diag(), 0, 0);
            let v = marginal_variance(&m, &d, &r.s_inv, &s).unwrap();
            let cov = q.spd_inverse().unwrap();
            for i in 0..60 {
                assert!(rel(v[i], cov[(i, i)]) <= 1e-8);
                assert!(v[i] >= d.diag_variance[i]);
            }
        }
    }

    #[test]
    fn no_fixed_effects_leaves_variance_unchanged() {
        let m = LatentModel::direct_observation(build_ar1_precision(0.5, 5).unwrap(), 1.0, vec![1.0; 5]).unwrap();
        let d = MarginalResult::new("x", vec![0.3; 5], 0, 0);
        let v = marginal_variance(&m, &d, &DenseMatrix::zeros(0, 0), &tight()).unwrap();
        assert_eq!(v, vec![0.3; 5]);
        assert!(marginal_variance(&m, &MarginalResult::new("x", vec![0.3; 4], 0, 0), &DenseMatrix::zeros(0, 0), &tight()).is_err());
    }

    #[test]
    fn trace_small_cases() {
        let f = sparse_cholesky(&SparseMatrix::identity(3), Ordering::Natural).unwrap();
        let z = takahashi_selected_inverse(&f).unwrap();
        assert_eq!(trace_inv_times(&z, &SparseMatrix::identity(3)).unwrap(), 3.0);
        let f = sparse_cholesky(&SparseMatrix::diagonal(&[2.0, 4.0]), Ordering::Natural).unwrap();
        let z = takahashi_selected_inverse(&f).unwrap();
        assert_eq!(trace_inv_times(&z, &SparseMatrix::identity(2)).unwrap(), 0.75);
    }

    #[test]
    fn trace_ar1_derivative_matches_dense() {
        let (n, phi) = (30, 0.7);
        let q = build_ar1_precision(phi, n).unwrap();
        let mut t = Vec::new();
        for i in 1..n - 1 {
            t.push((i, i, 2.0 * phi));
        }
        for i in 0..n - 1 {
            t.push((i, i + 1, -1.0));
            t.push((i + 1, i, -1.0));
        }
        let dq = SparseMatrix::from_triplets(n, n, &t).unwrap();
        let z = takahashi_selected_inverse(&sparse_cholesky(&q, Ordering::AmdLike).unwrap()).unwrap();
        let got = trace_inv_times(&z, &dq).unwrap();
        let truth: f64 = {
            let p = q.to_dense().spd_inverse().unwrap().matmul(&dq.to_dense()).unwrap();
            (0..n).map(|i| p[(i, i)]).sum()
        };
        assert!((got - truth).abs() <= 1e-10 * truth.abs());
    }

    #[test]
    fn trace_reports_uncovered_entries() {
        let f = sparse_cholesky(&SparseMatrix::identity(3), Ordering::Natural).unwrap();
        let z = takahashi_selected_inverse(&f).unwrap();
        let dq = SparseMatrix::from_triplets(3, 3, &[(0, 2, 1.0), (2, 0, 1.0)]).unwrap();
        assert!(matches!(
            trace_inv_times(&z, &dq),
            Err(Error::PatternNotCovered { row: 0, col: 2, more: 1 })
        ));
    }

    #[test]
    fn summary_csv() {
        let m = scalar(false);
        let r = posterior_mean(&m, &tight()).unwrap();
        let s = PosteriorSummary::new(&r, vec![0.25]);
        assert_eq!(s.to_csv(), "node_id,mean,sd\n0,1e0,5e-1\n");
        assert_eq!(s.to_json()["v"], 1);
    }
}
