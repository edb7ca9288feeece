use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::sparse::{CholeskyFactor, SparseMatrix};

/// Symmetric linear map `y = A x`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;

    fn apply_into(&self, x: &[f64], y: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y);
        y
    }
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        self.n_rows()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.spmv_into(x, y);
    }
}

/// Split-preconditioned operator `L⁻¹ Q L⁻ᵀ` for a factor `L` of an
/// approximation to `Q`.
pub struct PreconditionedOperator<'a> {
    q: &'a SparseMatrix,
    factor: &'a CholeskyFactor,
}

impl<'a> PreconditionedOperator<'a> {
    pub fn new(q: &'a SparseMatrix, factor: &'a CholeskyFactor) -> Result<Self> {
        if !q.is_square() || q.n_rows() != factor.dim() {
            return Err(Error::DimensionMismatch(format!(
                "operator of size {}x{} with factor of dimension {}",
                q.n_rows(),
                q.n_cols(),
                factor.dim()
            )));
        }
        let op = PreconditionedOperator { q, factor };
        if cfg!(debug_assertions) {
            check_symmetric(&op, 0x5eed)?;
        }
        Ok(op)
    }

    pub fn factor(&self) -> &CholeskyFactor {
        self.factor
    }
}

impl LinearOperator for PreconditionedOperator<'_> {
    fn dim(&self) -> usize {
        self.q.n_rows()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let t = self.factor.backward(x);
        let qt = self.q.apply(&t);
        y.copy_from_slice(&self.factor.forward(&qt));
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Random bilinear-form test `|xᵀAy − yᵀAx| ≤ 1e-10 ‖x‖‖y‖‖A‖`.
pub fn check_symmetric(op: &dyn LinearOperator, seed: u64) -> Result<()> {
    let n = op.dim();
    if n == 0 {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let ax = op.apply(&x);
    let ay = op.apply(&y);
    let scale = norm(&x) * norm(&ay) + norm(&y) * norm(&ax);
    let defect = (dot(&x, &ay) - dot(&y, &ax)).abs();
    if defect > 1e-10 * scale {
        return Err(Error::Numerical(format!("operator is not symmetric (defect {defect:e})")));
    }
    Ok(())
}
