//! Estimators of `diag(Q⁻¹)`: stochastic baselines, Rao-Blackwellized Monte
//! Carlo variants and exact substructuring.

mod hutchinson;
mod local;
mod overlapping;
mod parallel;
mod probing;
mod recursive;
mod result;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use hutchinson::hutchinson_diag;
pub use overlapping::{overlapping_rbmc, overlapping_rbmc_with_samples};
pub use parallel::{basic_rbmc, parallel_rbmc, parallel_rbmc_with_samples, schur_interface_variance};
pub use probing::{distance_coloring, probing_diag};
pub use recursive::recursive_rbmc;
pub use result::{
    distance_buckets, relative_errors, IterationSummary, MarginalResult, PartitionDiagnostics, PhaseTimings,
};

use crate::error::{Error, Result};
use crate::krylov::{sample_gmrf, LanczosOptions, SampleSet};
use crate::partition::{Graph, PartitionPlan};
use crate::sparse::{ic0_shifted, sparse_cholesky, takahashi_selected_inverse, CholeskyFactor, Ordering, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecondKind {
    /// IC(0), shifted by a multiple of the diagonal if it breaks down.
    #[default]
    Ic0,
    /// Complete Cholesky of each partition block (plus the separator).
    BlockJacobi,
    Jacobi,
    /// Complete sparse Cholesky; the sampler becomes exact.
    Cholesky,
}

impl PrecondKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ic0" => Ok(PrecondKind::Ic0),
            "block_jacobi" => Ok(PrecondKind::BlockJacobi),
            "jacobi" => Ok(PrecondKind::Jacobi),
            "cholesky" => Ok(PrecondKind::Cholesky),
            other => Err(Error::Unknown { kind: "preconditioner", name: other.to_string() }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RbmcMode {
    /// Variance of the conditional mean from Krylov samples.
    #[default]
    Sampled,
    /// Variance of the conditional mean from the exact interface covariance.
    ExactInterface,
}

impl RbmcMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sampled" => Ok(RbmcMode::Sampled),
            "exact_interface" => Ok(RbmcMode::ExactInterface),
            other => Err(Error::Unknown { kind: "RBMC mode", name: other.to_string() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSettings {
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub lanczos: LanczosOptions,
    pub cg_rtol: f64,
    pub cg_maxit: usize,
    pub precond: PrecondKind,
    /// Probing distance.
    pub p: usize,
    /// Leaf size of recursive RBMC.
    pub base_size: usize,
    pub mode: RbmcMode,
    /// Largest separator for which a dense interface covariance is formed.
    pub interface_limit: usize,
    /// Local blocks up to this size are inverted densely.
    pub dense_cutoff: usize,
    pub ordering: Ordering,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        EstimatorSettings {
            k: 100,
            seed: 1,
            lanczos: LanczosOptions::default(),
            cg_rtol: 1e-10,
            cg_maxit: 10_000,
            precond: PrecondKind::Ic0,
            p: 2,
            base_size: 500,
            mode: RbmcMode::Sampled,
            interface_limit: 2000,
            dense_cutoff: 64,
            ordering: Ordering::AmdLike,
        }
    }
}

/// Inputs shared by every estimator.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub q: &'a SparseMatrix,
    pub graph: &'a Graph,
    pub plan: Option<&'a PartitionPlan>,
}

impl<'a> Problem<'a> {
    pub fn require_plan(&self, who: &str) -> Result<&'a PartitionPlan> {
        self.plan.ok_or_else(|| Error::InvalidPlan(format!("{who} needs a partition plan")))
    }
}

pub trait DiagonalEstimator: Send + Sync {
    fn name(&self) -> &'static str;

    fn estimate(&self, problem: &Problem<'_>, settings: &EstimatorSettings) -> Result<MarginalResult>;
}

pub fn build_preconditioner(
    q: &SparseMatrix,
    kind: PrecondKind,
    plan: Option<&PartitionPlan>,
) -> Result<CholeskyFactor> {
    match kind {
        PrecondKind::Ic0 => Ok(ic0_shifted(q)?.0),
        PrecondKind::Jacobi => CholeskyFactor::jacobi(q),
        PrecondKind::Cholesky => sparse_cholesky(q, Ordering::AmdLike),
        PrecondKind::BlockJacobi => {
            let blocks = match plan {
                Some(p) => {
                    let mut b = p.a.clone();
                    if !p.separator.is_empty() {
                        b.push(p.separator.clone());
                    }
                    b
                }
                None => {
                    let n = q.n_rows();
                    let size = 256.min(n.max(1));
                    (0..n).step_by(size).map(|s| (s..(s + size).min(n)).collect()).collect()
                }
            };
            CholeskyFactor::block_jacobi(q, &blocks)
        }
    }
}

/// `K` samples of `N(0, Q⁻¹)` with the configured preconditioner; errors if
/// any sample did not converge.
pub fn draw_samples(q: &SparseMatrix, plan: Option<&PartitionPlan>, s: &EstimatorSettings) -> Result<SampleSet> {
    let pre = build_preconditioner(q, s.precond, plan)?;
    let set = sample_gmrf(q, &pre, s.k, s.seed, &s.lanczos)?;
    set.require_converged()?;
    Ok(set)
}

pub(crate) fn require_k(k: usize, who: &str) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument(format!("{who} needs K >= 1")));
    }
    Ok(())
}

struct Hutchinson;
struct Probing;
struct BasicRbmc;
struct ParallelRbmc;
struct OverlappingRbmc;
struct RecursiveRbmc;
struct Takahashi;

impl DiagonalEstimator for Hutchinson {
    fn name(&self) -> &'static str {
        "hutchinson"
    }
    fn estimate(&self, p: &Problem<'_>, s: &EstimatorSettings) -> Result<MarginalResult> {
        hutchinson_diag(p.q, s)
    }
}

impl DiagonalEstimator for Probing {
    fn name(&self) -> &'static str {
        "probing"
    }
    fn estimate(&self, p: &Problem<'_>, s: &EstimatorSettings) -> Result<MarginalResult> {
        probing_diag(p.q, p.graph, s)
    }
}

impl DiagonalEstimator for BasicRbmc {
    fn name(&self) -> &'static str {
        "basic_rbmc"
    }
    fn estimate(&self, p: &Problem<'_>, s: &EstimatorSettings) -> Result<MarginalResult> {
        require_k(s.k, "basic_rbmc")?;
        let t = std::time::Instant::now();
        let set = draw_samples(p.q, p.plan, s)?;
        let sampling = t.elapsed().as_secs_f64();
        let mut r = basic_rbmc(p.q, &set.samples)?;
        r.sampling = IterationSummary::from_reports(&set.reports);
        r.timings.sampling = sampling;
        Ok(r)
    }
}

impl DiagonalEstimator for ParallelRbmc {
    fn name(&self) -> &'static str {
        "parallel_rbmc"
    }
    fn estimate(&self, p: &Problem<'_>, s: &EstimatorSettings) -> Result<MarginalResult> {
        parallel_rbmc(p.q, p.graph, p.require_plan("parallel_rbmc")?, s)
    }
}

impl DiagonalEstimator for OverlappingRbmc {
    fn name(&self) -> &'static str {
        "overlapping_rbmc"
    }
    fn estimate(&self, p: &Problem<'_>, s: &EstimatorSettings) -> Result<MarginalResult> {
        overlapping_rbmc(p.q, p.graph, p.require_plan("overlapping_rbmc")?, s)
    }
}

impl DiagonalEstimator for RecursiveRbmc {
    fn name(&self) -> &'static str {
        "recursive_rbmc"
    }
    fn estimate(&self, p: &Problem<'_>, s: &EstimatorSettings) -> Result<MarginalResult> {
        recursive_rbmc(p.q, s)
    }
}

impl DiagonalEstimator for Takahashi {
    fn name(&self) -> &'static str {
        "takahashi"
    }
    fn estimate(&self, p: &Problem<'_>, s: &EstimatorSettings) -> Result<MarginalResult> {
        let t = std::time::Instant::now();
        let f = sparse_cholesky(p.q, s.ordering)?;
        let d = takahashi_selected_inverse(&f)?.diag();
        let mut r = MarginalResult::new("takahashi", d, 0, 0);
        r.timings.factorization = t.elapsed().as_secs_f64();
        r.partitions.push(PartitionDiagnostics {
            part: 0,
            owned: p.q.n_rows(),
            local: p.q.n_rows(),
            frontier: 0,
            factor_nnz: f.nnz(),
            dense: false,
        });
        r.check_positive()?;
        Ok(r)
    }
}

/// Estimators by name.
pub struct EstimatorRegistry {
    entries: BTreeMap<&'static str, Box<dyn DiagonalEstimator>>,
}

impl Default for EstimatorRegistry {
    fn default() -> Self {
        let mut r = EstimatorRegistry { entries: BTreeMap::new() };
        r.register(Box::new(Hutchinson));
        r.register(Box::new(Probing));
        r.register(Box::new(BasicRbmc));
        r.register(Box::new(ParallelRbmc));
        r.register(Box::new(OverlappingRbmc));
        r.register(Box::new(RecursiveRbmc));
        r.register(Box::new(Takahashi));
        r
    }
}

impl EstimatorRegistry {
    pub fn register(&mut self, e: Box<dyn DiagonalEstimator>) {
        self.entries.insert(e.name(), e);
    }

    pub fn get(&self, name: &str) -> Result<&dyn DiagonalEstimator> {
        self.entries
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::Unknown { kind: "estimator", name: name.to_string() })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}
