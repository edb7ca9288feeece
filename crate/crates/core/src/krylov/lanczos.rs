use serde::{Deserialize, Serialize};

use super::operator::{dot, norm};
use super::{tridiag_eig, LinearOperator, SolveReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Residual of the CG iterate for `A⁻¹ b` implied by the current `T_m`.
    #[default]
    CgResidual,
    /// Relative change of the matrix-function iterate between steps.
    Stagnation,
}

impl StopRule {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cg_residual" => Ok(StopRule::CgResidual),
            "stagnation" => Ok(StopRule::Stagnation),
            other => Err(Error::Unknown { kind: "stopping rule", name: other.to_string() }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanczosOptions {
    pub rtol: f64,
    pub maxit: usize,
    pub stop: StopRule,
    /// Classical Gram-Schmidt against the full basis, applied twice.
    pub reorthogonalize: bool,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions { rtol: 1e-8, maxit: 1000, stop: StopRule::CgResidual, reorthogonalize: true }
    }
}

/// `A V_m = V_m T_m + β_{m+1} v_{m+1} e_mᵀ` with `v_1 = b / β`.
#[derive(Debug, Clone)]
pub struct LanczosDecomposition {
    pub basis: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    /// Off-diagonal of `T_m`, length `m − 1`.
    pub offdiag: Vec<f64>,
    pub beta: f64,
    /// `β_{m+1}`; zero after breakdown.
    pub next_beta: f64,
    /// `v_{m+1}` (empty after breakdown).
    pub next_vector: Vec<f64>,
    pub report: SolveReport,
}

struct Process<'a> {
    op: &'a dyn LinearOperator,
    reorth: bool,
    basis: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    offdiag: Vec<f64>,
    beta: f64,
    next_beta: f64,
    next_vector: Vec<f64>,
    tnorm: f64,
}

impl<'a> Process<'a> {
    fn new(op: &'a dyn LinearOperator, b: &[f64], reorth: bool) -> Result<Self> {
        if b.len() != op.dim() {
            return Err(Error::DimensionMismatch(format!("start vector of length {} for dimension {}", b.len(), op.dim())));
        }
        let beta = norm(b);
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::InvalidArgument("Lanczos start vector must be nonzero and finite".into()));
        }
        Ok(Process {
            op,
            reorth,
            basis: Vec::new(),
            alpha: Vec::new(),
            offdiag: Vec::new(),
            beta,
            next_beta: beta,
            next_vector: b.iter().map(|x| x / beta).collect(),
            tnorm: 0.0,
        })
    }

    fn m(&self) -> usize {
        self.alpha.len()
    }

    /// Extends the basis by one vector; returns true on breakdown.
    fn step(&mut self) -> bool {
        let v = std::mem::take(&mut self.next_vector);
        if !self.basis.is_empty() {
            self.offdiag.push(self.next_beta);
        }
        let mut w = self.op.apply(&v);
        let a = dot(&w, &v);
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi -= a * vi;
        }
        if let (Some(prev), Some(&b)) = (self.basis.last(), self.offdiag.last()) {
            for (wi, pi) in w.iter_mut().zip(prev) {
                *wi -= b * pi;
            }
        }
        self.basis.push(v);
        self.alpha.push(a);
        if self.reorth {
            for _ in 0..2 {
                let coef: Vec<f64> = self.basis.iter().map(|q| dot(q, &w)).collect();
                for (q, c) in self.basis.iter().zip(coef) {
                    for (wi, qi) in w.iter_mut().zip(q) {
                        *wi -= c * qi;
                    }
                }
            }
        }
        let nb = norm(&w);
        let prev_b = self.offdiag.last().copied().unwrap_or(0.0);
        self.tnorm = self.tnorm.max(a.abs() + prev_b + nb);
        if nb <= 1e-13 * self.tnorm {
            self.next_beta = 0.0;
            return true;
        }
        self.next_beta = nb;
        self.next_vector = w.into_iter().map(|x| x / nb).collect();
        false
    }

    /// `β_{m+1} |e_mᵀ T_m⁻¹ e_1|`, the relative CG residual.
    fn cg_residual(&self) -> f64 {
        match solve_tridiagonal_e1(&self.alpha, &self.offdiag) {
            Some(y) => self.next_beta * y[y.len() - 1].abs(),
            None => f64::INFINITY,
        }
    }

    fn finish(self, report: SolveReport) -> LanczosDecomposition {
        LanczosDecomposition {
            basis: self.basis,
            alpha: self.alpha,
            offdiag: self.offdiag,
            beta: self.beta,
            next_beta: self.next_beta,
            next_vector: self.next_vector,
            report,
        }
    }
}

/// `T⁻¹ e_1` by Gaussian elimination without pivoting; `None` on a zero pivot.
fn solve_tridiagonal_e1(diag: &[f64], off: &[f64]) -> Option<Vec<f64>> {
    let m = diag.len();
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    let mut piv = diag[0];
    if piv == 0.0 {
        return None;
    }
    d[0] = 1.0 / piv;
    for i in 1..m {
        c[i - 1] = off[i - 1] / piv;
        piv = diag[i] - off[i - 1] * c[i - 1];
        if piv == 0.0 {
            return None;
        }
        d[i] = -off[i - 1] * d[i - 1] / piv;
    }
    for i in (0..m - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

/// Lanczos tridiagonalization stopped by the CG-residual rule.
pub fn lanczos(op: &dyn LinearOperator, b: &[f64], rtol: f64, maxit: usize) -> Result<LanczosDecomposition> {
    lanczos_with(op, b, &LanczosOptions { rtol, maxit, ..LanczosOptions::default() })
}

pub fn lanczos_with(op: &dyn LinearOperator, b: &[f64], opts: &LanczosOptions) -> Result<LanczosDecomposition> {
    let mut p = Process::new(op, b, opts.reorthogonalize)?;
    let maxit = opts.maxit.max(1);
    loop {
        let broke = p.step();
        let res = if broke { 0.0 } else { p.cg_residual() };
        if broke || res <= opts.rtol || p.m() >= maxit {
            let converged = broke || res <= opts.rtol;
            let m = p.m();
            return Ok(p.finish(SolveReport { iterations: m, final_residual: res, converged }));
        }
    }
}

impl LanczosDecomposition {
    pub fn m(&self) -> usize {
        self.alpha.len()
    }

    /// `β V_m f(T_m) e_1`.
    pub fn apply_function(&self, f: impl Fn(f64) -> Result<f64>) -> Result<Vec<f64>> {
        let c = function_coefficients(&self.alpha, &self.offdiag, self.beta, f)?;
        Ok(combine(&self.basis, &c))
    }

    /// Gauss quadrature for `bᵀ A^{-1/2} b`: `Σ_j (β u_1j)² λ_j^{-1/2}`.
    pub fn quadrature_inv_sqrt(&self) -> Result<f64> {
        let e = tridiag_eig(&self.alpha, &self.offdiag)?;
        let mut s = 0.0;
        for (j, &lam) in e.values.iter().enumerate() {
            s += (self.beta * e.vectors[(0, j)]).powi(2) * inv_sqrt(lam)?;
        }
        Ok(s)
    }

    /// Largest `|v_iᵀ v_j|`, `i ≠ j`.
    pub fn orthogonality_loss(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.basis.len() {
            for j in 0..i {
                worst = worst.max(dot(&self.basis[i], &self.basis[j]).abs());
            }
        }
        worst
    }

    /// Largest `‖A v_k − β_{k−1} v_{k−1} − α_k v_k − β_k v_{k+1}‖ / ‖A v_k‖`.
    pub fn recurrence_residual(&self, op: &dyn LinearOperator) -> f64 {
        let m = self.m();
        let mut worst = 0.0f64;
        for k in 0..m {
            let mut r = op.apply(&self.basis[k]);
            let scale = norm(&r).max(f64::MIN_POSITIVE);
            for (ri, vi) in r.iter_mut().zip(&self.basis[k]) {
                *ri -= self.alpha[k] * vi;
            }
            if k > 0 {
                for (ri, vi) in r.iter_mut().zip(&self.basis[k - 1]) {
                    *ri -= self.offdiag[k - 1] * vi;
                }
            }
            if k + 1 < m {
                for (ri, vi) in r.iter_mut().zip(&self.basis[k + 1]) {
                    *ri -= self.offdiag[k] * vi;
                }
            } else if !self.next_vector.is_empty() {
                for (ri, vi) in r.iter_mut().zip(&self.next_vector) {
                    *ri -= self.next_beta * vi;
                }
            }
            worst = worst.max(norm(&r) / scale);
        }
        worst
    }
}

fn inv_sqrt(lam: f64) -> Result<f64> {
    if lam > 0.0 {
        Ok(1.0 / lam.sqrt())
    } else {
        Err(Error::Indefinite(lam))
    }
}

/// `c = β U f(Λ) Uᵀ e_1`.
fn function_coefficients(
    alpha: &[f64],
    offdiag: &[f64],
    beta: f64,
    f: impl Fn(f64) -> Result<f64>,
) -> Result<Vec<f64>> {
    let e = tridiag_eig(alpha, offdiag)?;
    let m = alpha.len();
    let w: Vec<f64> = (0..m).map(|j| Ok(beta * e.vectors[(0, j)] * f(e.values[j])?)).collect::<Result<_>>()?;
    Ok((0..m).map(|k| (0..m).map(|j| e.vectors[(k, j)] * w[j]).sum()).collect())
}

fn combine(basis: &[Vec<f64>], c: &[f64]) -> Vec<f64> {
    let n = basis.first().map_or(0, Vec::len);
    let mut out = vec![0.0; n];
    for (v, &ck) in basis.iter().zip(c) {
        for (o, vi) in out.iter_mut().zip(v) {
            *o += ck * vi;
        }
    }
    out
}

/// `A^{-1/2} z ≈ β V_m T_m^{-1/2} e_1` on a fresh Krylov subspace.
pub fn apply_inv_sqrt(op: &dyn LinearOperator, z: &[f64], opts: &LanczosOptions) -> Result<(Vec<f64>, SolveReport)> {
    if z.iter().all(|&x| x == 0.0) {
        if z.len() != op.dim() {
            return Err(Error::DimensionMismatch("start vector length".into()));
        }
        return Ok((z.to_vec(), SolveReport { iterations: 0, final_residual: 0.0, converged: true }));
    }
    match opts.stop {
        StopRule::CgResidual => {
            let dec = lanczos_with(op, z, opts)?;
            Ok((dec.apply_function(inv_sqrt)?, dec.report))
        }
        StopRule::Stagnation => {
            let mut p = Process::new(op, z, opts.reorthogonalize)?;
            let mut prev: Option<Vec<f64>> = None;
            let maxit = opts.maxit.max(1);
            loop {
                let broke = p.step();
                let u = combine(&p.basis, &function_coefficients(&p.alpha, &p.offdiag, p.beta, inv_sqrt)?);
                let change = match &prev {
                    Some(q) => {
                        let d: f64 = u.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                        d / norm(&u).max(f64::MIN_POSITIVE)
                    }
                    None => f64::INFINITY,
                };
                let done = broke || change <= opts.rtol;
                if done || p.m() >= maxit {
                    let res = if broke { 0.0 } else { change };
                    return Ok((u, SolveReport { iterations: p.m(), final_residual: res, converged: done }));
                }
                prev = Some(u);
            }
        }
    }
}
