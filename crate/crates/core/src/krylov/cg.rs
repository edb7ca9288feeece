use serde::{Deserialize, Serialize};

use super::operator::{dot, norm};
use super::LinearOperator;
use crate::error::{Error, Result};
use crate::sparse::CholeskyFactor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradients. `precond` is applied as
/// `M⁻¹ r = (L Lᵀ)⁻¹ r`. The reported residual is `‖b − A x‖ / ‖b‖` from the
/// recurrence.
pub fn cg_solve(
    op: &dyn LinearOperator,
    precond: Option<&CholeskyFactor>,
    b: &[f64],
    rtol: f64,
    maxit: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = op.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch(format!("rhs of length {} for operator of dimension {n}", b.len())));
    }
    if let Some(f) = precond {
        if f.dim() != n {
            return Err(Error::DimensionMismatch("preconditioner dimension".into()));
        }
    }
    if !(rtol > 0.0 && rtol < 1.0) {
        return Err(Error::InvalidArgument(format!("rtol must lie in (0, 1), got {rtol}")));
    }
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, SolveReport { iterations: 0, final_residual: 0.0, converged: true }));
    }
    let precondition = |r: &[f64]| match precond {
        Some(f) => f.backward(&f.forward(r)),
        None => r.to_vec(),
    };
    let mut r = b.to_vec();
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = 1.0;
    for it in 1..=maxit {
        op.apply_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Indefinite(pap));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm(&r) / bnorm;
        if rel <= rtol {
            return Ok((x, SolveReport { iterations: it, final_residual: rel, converged: true }));
        }
        z = precondition(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok((x, SolveReport { iterations: maxit, final_residual: rel, converged: false }))
}
