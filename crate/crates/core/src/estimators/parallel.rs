use std::time::Instant;

use rayon::prelude::*;

use super::local::Substructure;
use super::{draw_samples, require_k, EstimatorSettings, IterationSummary, MarginalResult, RbmcMode};
use crate::error::{Error, Result};
use crate::krylov::SampleSet;
use crate::partition::{Graph, PartitionPlan};
use crate::sparse::{DenseMatrix, SparseMatrix};

/// Rao-Blackwellized estimate from samples `x⁽ᵏ⁾ ~ N(0, Q⁻¹)`:
///
/// `V(x_i) ≈ 1/q_ii + (1/K) Σ_k (q_ii⁻¹ Σ_{j≠i} q_ij x_j⁽ᵏ⁾)²`
pub fn basic_rbmc(q: &SparseMatrix, samples: &[Vec<f64>]) -> Result<MarginalResult> {
    require_k(samples.len(), "basic_rbmc")?;
    let n = q.n_rows();
    if samples.iter().any(|x| x.len() != n) {
        return Err(Error::DimensionMismatch("sample length differs from Q".into()));
    }
    let t = Instant::now();
    let k = samples.len() as f64;
    let d: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (cols, vals) = q.row(i);
            let qii = q.get(i, i);
            let mut acc = 0.0;
            for x in samples {
                let mut m = 0.0;
                for (&j, &v) in cols.iter().zip(vals) {
                    if j != i {
                        m += v * x[j];
                    }
                }
                let m = m / qii;
                acc += m * m;
            }
            1.0 / qii + acc / k
        })
        .collect();
    let mut r = MarginalResult::new("basic_rbmc", d, samples.len(), 0);
    r.timings.correction = t.elapsed().as_secs_f64();
    r.check_positive()?;
    Ok(r)
}

fn check_separated(plan: &PartitionPlan, graph: &Graph) -> Result<()> {
    plan.validate(graph)?;
    if plan.parts() > 1 && !plan.separated {
        return Err(Error::InvalidPlan("parallel RBMC needs a plan with a global separator".into()));
    }
    Ok(())
}

pub(crate) fn substructures(q: &SparseMatrix, plan: &PartitionPlan, s: &EstimatorSettings) -> Result<Vec<Substructure>> {
    plan.a
        .par_iter()
        .map(|a| Substructure::new(q, a.clone(), plan.separator.clone(), s))
        .collect()
}

pub(crate) fn interface_from_parts(q: &SparseMatrix, plan: &PartitionPlan, parts: &[Substructure], limit: usize) -> Result<DenseMatrix> {
    let ns = plan.separator.len();
    if ns == 0 {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    if ns > limit {
        return Err(Error::InterfaceTooLarge { size: ns, limit });
    }
    let contributions: Vec<DenseMatrix> = parts.par_iter().map(Substructure::schur_contribution).collect();
    let mut schur = q.extract_principal_submatrix(&plan.separator)?.to_dense();
    for c in &contributions {
        schur = schur.add_scaled(1.0, c, -1.0)?;
    }
    schur.symmetrize_in_place();
    schur.spd_inverse()
}

/// Exact interface covariance
/// `Σ_SS = (Q_SS − Σ_j Q_{S A_j} Q_{A_j A_j}⁻¹ Q_{A_j S})⁻¹`.
pub fn schur_interface_variance(
    q: &SparseMatrix,
    graph: &Graph,
    plan: &PartitionPlan,
    s: &EstimatorSettings,
) -> Result<DenseMatrix> {
    check_separated(plan, graph)?;
    if plan.separator.len() > s.interface_limit {
        return Err(Error::InterfaceTooLarge { size: plan.separator.len(), limit: s.interface_limit });
    }
    let parts = substructures(q, plan, s)?;
    interface_from_parts(q, plan, &parts, s.interface_limit)
}

/// Parallel RBMC on a separated plan:
/// `Σ_{A_j A_j} = Q_{A_j A_j}⁻¹ + V(Q_{A_j A_j}⁻¹ Q_{A_j S} u_S)`, `Σ_SS = V(u_S)`.
///
/// In sampled mode the variance term and the separator entries come from
/// `settings.k` Krylov samples; in exact-interface mode from the Schur
/// complement, which makes the result exact.
pub fn parallel_rbmc(q: &SparseMatrix, graph: &Graph, plan: &PartitionPlan, s: &EstimatorSettings) -> Result<MarginalResult> {
    check_separated(plan, graph)?;
    let mut samples = None;
    let mut sampling_time = 0.0;
    if s.mode == RbmcMode::Sampled && !plan.separator.is_empty() {
        require_k(s.k, "parallel_rbmc")?;
        let t = Instant::now();
        samples = Some(draw_samples(q, Some(plan), s)?);
        sampling_time = t.elapsed().as_secs_f64();
    }
    let mut r = parallel_rbmc_with_samples(q, graph, plan, samples.as_ref(), s)?;
    r.timings.sampling = sampling_time;
    Ok(r)
}

pub fn parallel_rbmc_with_samples(
    q: &SparseMatrix,
    graph: &Graph,
    plan: &PartitionPlan,
    samples: Option<&SampleSet>,
    s: &EstimatorSettings,
) -> Result<MarginalResult> {
    check_separated(plan, graph)?;
    let n = q.n_rows();
    let sep = &plan.separator;
    let t0 = Instant::now();
    let parts = substructures(q, plan, s)?;
    let t_fact = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let mut d = vec![0.0; n];
    let mut r_k = 0;
    let mut low = Vec::new();
    let mut sampling = IterationSummary { all_converged: true, ..Default::default() };

    let terms: Vec<Vec<f64>> = if sep.is_empty() {
        parts.iter().map(|p| vec![0.0; p.rows.len()]).collect()
    } else {
        match s.mode {
            RbmcMode::Sampled => {
                let set = samples.ok_or_else(|| Error::InvalidArgument("sampled mode needs samples".into()))?;
                require_k(set.len(), "parallel_rbmc")?;
                r_k = set.len();
                sampling = IterationSummary::from_reports(&set.reports);
                for &v in sep {
                    d[v] = set.samples.iter().map(|u| u[v] * u[v]).sum::<f64>() / set.len() as f64;
                }
                low = sep.clone();
                parts.par_iter().map(|p| p.sampled_term(&set.samples)).collect()
            }
            RbmcMode::ExactInterface => {
                let sigma = interface_from_parts(q, plan, &parts, s.interface_limit)?;
                for (t, &v) in sep.iter().enumerate() {
                    d[v] = sigma[(t, t)];
                }
                parts.par_iter().map(|p| p.exact_term(&sigma)).collect()
            }
        }
    };
    for (p, term) in parts.iter().zip(&terms) {
        for ((&g, base), t) in p.rows.iter().zip(p.inv.diag()).zip(term) {
            d[g] = base + t;
        }
    }
    let label = match s.mode {
        RbmcMode::Sampled => "parallel_rbmc",
        RbmcMode::ExactInterface => "parallel_rbmc_exact",
    };
    let mut r = MarginalResult::new(label, d, r_k, plan.l);
    r.partitions = parts.iter().enumerate().map(|(j, p)| p.diagnostics(j, p.rows.len())).collect();
    r.sampling = sampling;
    r.low_accuracy = low;
    if !sep.is_empty() {
        r.separator_distance = Some(graph.hop_distances(sep));
    }
    r.timings.factorization = t_fact;
    r.timings.correction = t1.elapsed().as_secs_f64();
    r.check_positive()?;
    Ok(r)
}
