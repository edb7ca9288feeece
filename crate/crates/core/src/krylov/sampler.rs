use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::operator::norm;
use super::{apply_inv_sqrt, LanczosOptions, LinearOperator, PreconditionedOperator, SolveReport};
use crate::error::{Error, Result};
use crate::sparse::{CholeskyFactor, SparseMatrix};

/// `n` standard normal draws from ChaCha8 seeded with `seed` on stream `k`.
pub fn standard_normal_stream(seed: u64, k: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

#[derive(Debug, Clone)]
pub struct SampleSet {
    pub samples: Vec<Vec<f64>>,
    pub reports: Vec<SolveReport>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn all_converged(&self) -> bool {
        self.reports.iter().all(|r| r.converged)
    }

    /// Error naming the first sample whose Krylov iteration did not converge.
    pub fn require_converged(&self) -> Result<()> {
        match self.reports.iter().position(|r| !r.converged) {
            None => Ok(()),
            Some(k) => Err(Error::NotConverged(format!(
                "sample {k} stopped after {} Lanczos steps at residual {:e}",
                self.reports[k].iterations, self.reports[k].final_residual
            ))),
        }
    }

    /// One sample per column.
    pub fn to_csv(&self) -> String {
        samples_to_csv(&self.samples)
    }
}

pub fn samples_to_csv(samples: &[Vec<f64>]) -> String {
    let n = samples.first().map_or(0, Vec::len);
    let mut s = (0..samples.len()).map(|k| format!("s{k}")).collect::<Vec<_>>().join(",");
    s.push('\n');
    for i in 0..n {
        let row: Vec<String> = samples.iter().map(|x| format!("{:e}", x[i])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Draws `u_k ~ N(0, Q⁻¹)`, `k = 0..count`: Lanczos on `L⁻¹ Q L⁻ᵀ` started
/// at `z_k`, then `u_k = L⁻ᵀ ũ_k`.
///
/// If `precond` is complete and reproduces `Q` the operator is the identity
/// and `u_k = L⁻ᵀ z_k` is returned directly.
pub fn sample_gmrf(
    q: &SparseMatrix,
    precond: &CholeskyFactor,
    count: usize,
    seed: u64,
    opts: &LanczosOptions,
) -> Result<SampleSet> {
    let op = PreconditionedOperator::new(q, precond)?;
    let n = q.n_rows();
    let exact = precond.is_complete() && {
        let z = standard_normal_stream(seed, u64::MAX, n);
        let d: Vec<f64> = op.apply(&z).iter().zip(&z).map(|(a, b)| a - b).collect();
        norm(&d) <= 1e-10 * norm(&z)
    };
    let out: Vec<(Vec<f64>, SolveReport)> = (0..count)
        .into_par_iter()
        .map(|k| {
            let z = standard_normal_stream(seed, k as u64, n);
            if exact {
                let rep = SolveReport { iterations: 1, final_residual: 0.0, converged: true };
                return Ok((precond.backward(&z), rep));
            }
            let (ut, rep) = apply_inv_sqrt(&op, &z, opts)?;
            Ok((precond.backward(&ut), rep))
        })
        .collect::<Result<_>>()?;
    let (samples, reports) = out.into_iter().unzip();
    Ok(SampleSet { samples, reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_ar1_precision;
    use crate::sparse::{ic0, sparse_cholesky, Ordering};

    #[test]
    fn diagonal_exact_preconditioner() {
        let d = [4.0, 9.0, 2.0];
        let q = SparseMatrix::diagonal(&d);
        let f = sparse_cholesky(&q, Ordering::Natural).unwrap();
        let s = sample_gmrf(&q, &f, 4, 7, &LanczosOptions::default()).unwrap();
        for (k, u) in s.samples.iter().enumerate() {
            let z = standard_normal_stream(7, k as u64, 3);
            for i in 0..3 {
                assert_eq!(u[i], z[i] / d[i].sqrt());
            }
        }
    }

    #[test]
    fn complete_factor_rewinds_exactly() {
        let q = build_ar1_precision(0.9, 40).unwrap();
        let f = sparse_cholesky(&q, Ordering::AmdLike).unwrap();
        let s = sample_gmrf(&q, &f, 3, 1, &LanczosOptions::default()).unwrap();
        for (k, u) in s.samples.iter().enumerate() {
            assert_eq!(u, &f.backward(&standard_normal_stream(1, k as u64, 40)));
            assert_eq!(s.reports[k].iterations, 1);
        }
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let q = build_ar1_precision(0.95, 60).unwrap();
        let f = ic0(&q).unwrap();
        let opts = LanczosOptions::default();
        let a = sample_gmrf(&q, &f, 6, 42, &opts).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| sample_gmrf(&q, &f, 6, 42, &opts).unwrap());
        assert_eq!(a.samples, b.samples);
        assert!(a.all_converged());
    }

    #[test]
    fn streams_are_distinct() {
        assert_ne!(standard_normal_stream(1, 0, 4), standard_normal_stream(1, 1, 4));
        assert_ne!(standard_normal_stream(1, 0, 4), standard_normal_stream(2, 0, 4));
    }

    #[test]
    fn csv_one_sample_per_column() {
        let csv = samples_to_csv(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        assert_eq!(csv, "s0,s1,s2\n1e0,3e0,5e0\n2e0,4e0,6e0\n");
    }

    #[test]
    fn ar1_marginal_variances_in_band() {
        let n = 100;
        let q = build_ar1_precision(0.95, n).unwrap();
        let truth = q.to_dense().spd_inverse().unwrap().diag();
        let f = ic0(&q).unwrap();
        let k = 5000;
        let s = sample_gmrf(&q, &f, k, 42, &LanczosOptions::default()).unwrap();
        s.require_converged().unwrap();
        let band = 3.0 * (2.0 / k as f64).sqrt();
        let inside = (0..n)
            .filter(|&i| {
                let v: f64 = s.samples.iter().map(|u| u[i] * u[i]).sum::<f64>() / k as f64;
                (v - truth[i]).abs() <= band * truth[i]
            })
            .count();
        assert!(inside as f64 >= 0.95 * n as f64, "{inside}");
    }
}
