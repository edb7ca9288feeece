use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{sparse_cholesky, DenseMatrix, Ordering, SparseMatrix};

/// Node layout of a space-time field: `n_s` spatial nodes per time slab,
/// `n_t` slabs, spatial index fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlabLayout {
    pub n_s: usize,
    pub n_t: usize,
}

impl SlabLayout {
    pub fn n(&self) -> usize {
        self.n_s * self.n_t
    }

    pub fn slab_of(&self, node: usize) -> usize {
        node / self.n_s
    }
}

/// Gaussian latent model with a sparse field `u` and fixed effects `β`:
///
/// `y | u, β ~ N(A_u u + A_β β, (τ_y I)⁻¹)`, `u ~ N(0, Q_u⁻¹)`, `β ~ N(0, Q_β⁻¹)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentModel {
    pub q_u: SparseMatrix,
    pub q_beta: SparseMatrix,
    pub a_u: SparseMatrix,
    pub a_beta: DenseMatrix,
    pub tau_y: f64,
    pub y: Vec<f64>,
    pub layout: Option<SlabLayout>,
}

/// Blocks of the posterior precision; the full matrix is never assembled.
#[derive(Debug, Clone)]
pub struct PosteriorBlocks {
    /// `Q_u + A_uᵀ Q_y A_u`
    pub q_uu: SparseMatrix,
    /// `A_uᵀ Q_y A_β`, `n_u × n_β`
    pub q_ubeta: DenseMatrix,
    /// `Q_β + A_βᵀ Q_y A_β`
    pub q_betabeta: DenseMatrix,
}

impl LatentModel {
    pub fn n_latent(&self) -> usize {
        self.q_u.n_rows()
    }

    pub fn n_beta(&self) -> usize {
        self.q_beta.n_rows()
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n_obs = self.y.len();
        let mismatch = |what: String| Err(Error::DimensionMismatch(what));
        if !self.q_u.is_square() {
            return mismatch("Q_u must be square".into());
        }
        if !self.q_beta.is_square() {
            return mismatch("Q_beta must be square".into());
        }
        if self.a_u.n_rows() != n_obs {
            return mismatch(format!("A_u has {} rows but y has {n_obs} entries", self.a_u.n_rows()));
        }
        if self.a_beta.n_rows() != n_obs {
            return mismatch(format!("A_beta has {} rows but y has {n_obs} entries", self.a_beta.n_rows()));
        }
        if self.a_u.n_cols() != self.q_u.n_rows() {
            return mismatch(format!("A_u has {} columns but Q_u is {}x{0}", self.a_u.n_cols(), self.q_u.n_rows()));
        }
        if self.a_beta.n_cols() != self.q_beta.n_rows() {
            return mismatch(format!(
                "A_beta has {} columns but Q_beta is {}x{1}",
                self.a_beta.n_cols(),
                self.q_beta.n_rows()
            ));
        }
        if let Some(l) = self.layout {
            if l.n() != self.q_u.n_rows() {
                return mismatch(format!("slab layout {}x{} does not match n = {}", l.n_s, l.n_t, self.q_u.n_rows()));
            }
        }
        if !(self.tau_y >= 0.0) {
            return Err(Error::InvalidArgument("tau_y must be nonnegative".into()));
        }
        Ok(())
    }

    /// Model observed directly at every latent node (`A_u = I`) without
    /// fixed effects.
    pub fn direct_observation(q_u: SparseMatrix, tau_y: f64, y: Vec<f64>) -> Result<Self> {
        let n = q_u.n_rows();
        let m = LatentModel {
            q_u,
            q_beta: SparseMatrix::zeros(0, 0),
            a_u: SparseMatrix::identity(n),
            a_beta: DenseMatrix::zeros(n, 0),
            tau_y,
            y,
            layout: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_layout(mut self, layout: SlabLayout) -> Result<Self> {
        self.layout = Some(layout);
        self.validate()?;
        Ok(self)
    }
}

pub fn assemble_posterior_blocks(model: &LatentModel) -> Result<PosteriorBlocks> {
    model.validate()?;
    let at = model.a_u.transpose();
    let ata = at.matmul(&model.a_u)?;
    let q_uu = model.q_u.add_scaled(1.0, &ata, model.tau_y)?.symmetrize()?;

    let n_beta = model.n_beta();
    let cols: Vec<Vec<f64>> = (0..n_beta)
        .map(|j| {
            let c = model.a_beta.column(j);
            at.spmv(&c).map(|v| v.into_iter().map(|x| model.tau_y * x).collect())
        })
        .collect::<Result<_>>()?;
    let q_ubeta = DenseMatrix::from_columns(model.n_latent(), &cols)?;

    let btb = model.a_beta.transpose().matmul(&model.a_beta)?;
    let q_betabeta = model.q_beta.to_dense().add_scaled(1.0, &btb, model.tau_y)?;
    Ok(PosteriorBlocks { q_uu, q_ubeta, q_betabeta })
}

/// Draws `u ~ N(0, Q_u⁻¹)` and returns `y = A_u u + A_β β + ε` with
/// `ε ~ N(0, τ_y⁻¹ I)`. Used to make synthetic data for the CLI.
pub fn simulate_observations(
    q_u: &SparseMatrix,
    a_u: &SparseMatrix,
    a_beta: &DenseMatrix,
    beta: &[f64],
    tau_y: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(tau_y > 0.0) {
        return Err(Error::InvalidArgument("simulation needs tau_y > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = sparse_cholesky(q_u, Ordering::AmdLike)?;
    let z: Vec<f64> = (0..q_u.n_rows()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let u = f.backward(&z);
    let mut y = a_u.spmv(&u)?;
    let xb = a_beta.matvec(beta)?;
    let sd = 1.0 / tau_y.sqrt();
    for (yi, b) in y.iter_mut().zip(xb) {
        let e: f64 = StandardNormal.sample(&mut rng);
        *yi += b + sd * e;
    }
    Ok(y)
}

/// Random model with `n` latent nodes, `n_beta` covariates and `n` noisy
/// observations of random pairs of nodes. `Q_u` is a diagonally dominant
/// chain with random long-range links.
pub fn random_latent_model(n: usize, n_beta: usize, seed: u64) -> Result<LatentModel> {
    if n < 2 {
        return Err(Error::InvalidArgument("random model needs n >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Vec::new();
    let mut diag = vec![0.0; n];
    let mut link = |i: usize, j: usize, w: f64, t: &mut Vec<(usize, usize, f64)>| {
        t.push((i, j, -w));
        t.push((j, i, -w));
        diag[i] += w;
        diag[j] += w;
    };
    for i in 0..n - 1 {
        link(i, i + 1, rng.random_range(0.2..1.0), &mut t);
    }
    for _ in 0..n / 4 {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i.abs_diff(j) > 1 {
            link(i, j, rng.random_range(0.1..0.5), &mut t);
        }
    }
    for (i, d) in diag.iter().enumerate() {
        t.push((i, i, d + rng.random_range(0.1..1.0)));
    }
    let q_u = SparseMatrix::from_triplets(n, n, &t)?;

    let mut at = Vec::with_capacity(2 * n);
    for r in 0..n {
        at.push((r, r, 1.0));
        let j = rng.random_range(0..n);
        if j != r {
            at.push((r, j, rng.random_range(-0.5..0.5)));
        }
    }
    let a_u = SparseMatrix::from_triplets(n, n, &at)?;
    let xb: Vec<f64> = (0..n * n_beta).map(|_| StandardNormal.sample(&mut rng)).collect();
    let a_beta = DenseMatrix::from_row_major(n, n_beta, xb)?;
    let beta: Vec<f64> = (0..n_beta).map(|k| 1.0 + k as f64).collect();
    let tau_y = 2.0;
    let y = simulate_observations(&q_u, &a_u, &a_beta, &beta, tau_y, seed.wrapping_add(1))?;
    let m = LatentModel {
        q_u,
        q_beta: SparseMatrix::diagonal(&vec![1e-2; n_beta]),
        a_u,
        a_beta,
        tau_y,
        y,
        layout: None,
    };
    m.validate()?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_ar1_precision;

    #[test]
    fn no_fixed_effects_adds_identity() {
        let q = build_ar1_precision(0.5, 4).unwrap();
        let m = LatentModel::direct_observation(q.clone(), 1.0, vec![0.0; 4]).unwrap();
        let b = assemble_posterior_blocks(&m).unwrap();
        assert_eq!(b.q_uu, q.add(&SparseMatrix::identity(4)).unwrap());
        assert_eq!(b.q_ubeta.n_cols(), 0);
        assert_eq!(b.q_betabeta.n_rows(), 0);
    }

    #[test]
    fn scalar_model_blocks() {
        let eps = 1e-3;
        let m = LatentModel {
            q_u: SparseMatrix::identity(1),
            q_beta: SparseMatrix::diagonal(&[eps]),
            a_u: SparseMatrix::identity(1),
            a_beta: DenseMatrix::from_row_major(1, 1, vec![1.0]).unwrap(),
            tau_y: 1.0,
            y: vec![2.0],
            layout: None,
        };
        let b = assemble_posterior_blocks(&m).unwrap();
        assert_eq!(b.q_uu.get(0, 0), 2.0);
        assert_eq!(b.q_ubeta[(0, 0)], 1.0);
        assert_eq!(b.q_betabeta[(0, 0)], eps + 1.0);
    }

    #[test]
    fn random_model_is_valid_and_reproducible() {
        let a = random_latent_model(40, 3, 7).unwrap();
        let b = random_latent_model(40, 3, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.q_u.is_symmetric());
        assert_eq!(a.n_beta(), 3);
        sparse_cholesky(&assemble_posterior_blocks(&a).unwrap().q_uu, Ordering::AmdLike).unwrap();
    }

    #[test]
    fn dimension_errors() {
        let q = build_ar1_precision(0.5, 4).unwrap();
        assert!(LatentModel::direct_observation(q.clone(), 1.0, vec![0.0; 3]).is_err());
        let m = LatentModel::direct_observation(q, 1.0, vec![0.0; 4]).unwrap();
        assert!(m.with_layout(SlabLayout { n_s: 3, n_t: 2 }).is_err());
    }
}
