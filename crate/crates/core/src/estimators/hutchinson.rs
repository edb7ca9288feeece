use std::time::Instant;

use rayon::prelude::*;

use super::{build_preconditioner, require_k, EstimatorSettings, IterationSummary, MarginalResult};
use crate::error::{Error, Result};
use crate::krylov::{cg_solve, standard_normal_stream};
use crate::sparse::SparseMatrix;

/// `diag(Q⁻¹) ≈ [Σ_k z_k ⊙ Q⁻¹ z_k] ⊘ [Σ_k z_k ⊙ z_k]` with Gaussian `z_k`.
///
/// The estimate is unbiased but not guaranteed positive for small `K`;
/// non-positive entries are reported in `warnings` rather than clipped.
pub fn hutchinson_diag(q: &SparseMatrix, s: &EstimatorSettings) -> Result<MarginalResult> {
    require_k(s.k, "hutchinson")?;
    let n = q.n_rows();
    let t0 = Instant::now();
    let pre = build_preconditioner(q, s.precond, None)?;
    let t_fact = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let solved: Vec<(Vec<f64>, Vec<f64>, _)> = (0..s.k)
        .into_par_iter()
        .map(|k| {
            let z = standard_normal_stream(s.seed, k as u64, n);
            let (x, rep) = cg_solve(q, Some(&pre), &z, s.cg_rtol, s.cg_maxit)?;
            Ok((z, x, rep))
        })
        .collect::<Result<_>>()?;
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    let mut reports = Vec::with_capacity(s.k);
    for (z, x, rep) in solved {
        for i in 0..n {
            num[i] += z[i] * x[i];
            den[i] += z[i] * z[i];
        }
        reports.push(rep);
    }
    if let Some(i) = den.iter().position(|&d| d < 1e-300) {
        return Err(Error::Numerical(format!("probe denominator vanished at node {i}")));
    }
    let d: Vec<f64> = num.iter().zip(&den).map(|(a, b)| a / b).collect();
    let mut r = MarginalResult::new("hutchinson", d, s.k, 0);
    r.solves = IterationSummary::from_reports(&reports);
    if !r.solves.all_converged {
        return Err(Error::NotConverged("a Hutchinson solve hit cg_maxit".into()));
    }
    let bad = r.diag_variance.iter().filter(|&&v| v <= 0.0).count();
    if bad > 0 {
        r.warnings.push(format!("{bad} non-positive estimates"));
    }
    r.timings.factorization = t_fact;
    r.timings.correction = t1.elapsed().as_secs_f64();
    Ok(r)
}
