use std::time::Instant;

use super::local::LocalInverse;
use super::parallel::{interface_from_parts, substructures};
use super::{draw_samples, require_k, EstimatorSettings, IterationSummary, MarginalResult, RbmcMode};
use crate::error::{Error, Result};
use crate::krylov::SolveReport;
use crate::partition::{graph_from_precision, partition, with_global_separator, RecursiveBisection};
use crate::sparse::SparseMatrix;

pub const MAX_DEPTH: usize = 32;

#[derive(Default)]
struct Trace {
    reports: Vec<SolveReport>,
    low_accuracy: Vec<usize>,
}

fn child_seed(seed: u64, node: u64) -> u64 {
    seed ^ node.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Recursive RBMC: bisect with a vertex separator, recurse on each half and
/// add the variance of the conditional mean given the separator.
///
/// Each level samples its own subproblem with a seed derived from
/// `settings.seed` and the position in the bisection tree.
pub fn recursive_rbmc(q: &SparseMatrix, s: &EstimatorSettings) -> Result<MarginalResult> {
    if s.base_size == 0 {
        return Err(Error::InvalidArgument("base_size must be at least 1".into()));
    }
    if s.mode == RbmcMode::Sampled && q.n_rows() > s.base_size {
        require_k(s.k, "recursive_rbmc")?;
    }
    let t = Instant::now();
    let ids: Vec<usize> = (0..q.n_rows()).collect();
    let mut trace = Trace::default();
    let mut d = vec![0.0; q.n_rows()];
    recurse(q, &ids, 0, 1, s, &mut d, &mut trace)?;
    let k = if trace.reports.is_empty() { 0 } else { s.k };
    let label = match s.mode {
        RbmcMode::Sampled => "recursive_rbmc",
        RbmcMode::ExactInterface => "recursive_rbmc_exact",
    };
    let mut r = MarginalResult::new(label, d, k, 0);
    r.sampling = IterationSummary::from_reports(&trace.reports);
    trace.low_accuracy.sort_unstable();
    r.low_accuracy = trace.low_accuracy;
    r.timings.correction = t.elapsed().as_secs_f64();
    r.check_positive()?;
    Ok(r)
}

/// Writes `diag(q⁻¹)` into `out[ids[i]]`.
fn recurse(
    q: &SparseMatrix,
    ids: &[usize],
    depth: usize,
    node: u64,
    s: &EstimatorSettings,
    out: &mut [f64],
    trace: &mut Trace,
) -> Result<()> {
    if depth > MAX_DEPTH {
        return Err(Error::RecursionDepth(MAX_DEPTH));
    }
    let n = q.n_rows();
    let leaf = |out: &mut [f64]| -> Result<()> {
        let d = LocalInverse::new(q, s.dense_cutoff, s.ordering)?.diag();
        for (&g, v) in ids.iter().zip(d) {
            out[g] = v;
        }
        Ok(())
    };
    if n <= s.base_size || n < 3 {
        return leaf(out);
    }
    let graph = graph_from_precision(q)?;
    let plan = match with_global_separator(&graph, &partition(&graph, 2, &RecursiveBisection, None)?) {
        Ok(p) => p,
        // the separator swallowed a half; nothing left to split
        Err(Error::InvalidPlan(_)) => return leaf(out),
        Err(e) => return Err(e),
    };
    let parts = substructures(q, &plan, s)?;
    let terms: Vec<Vec<f64>> = if plan.separator.is_empty() {
        parts.iter().map(|p| vec![0.0; p.rows.len()]).collect()
    } else {
        match s.mode {
            RbmcMode::Sampled => {
                let local = EstimatorSettings { seed: child_seed(s.seed, node), ..s.clone() };
                let set = draw_samples(q, Some(&plan), &local)?;
                for &v in &plan.separator {
                    out[ids[v]] = set.samples.iter().map(|u| u[v] * u[v]).sum::<f64>() / set.len() as f64;
                    trace.low_accuracy.push(ids[v]);
                }
                trace.reports.extend(set.reports.iter().cloned());
                parts.iter().map(|p| p.sampled_term(&set.samples)).collect()
            }
            RbmcMode::ExactInterface => {
                let sigma = interface_from_parts(q, &plan, &parts, s.interface_limit)?;
                for (t, &v) in plan.separator.iter().enumerate() {
                    out[ids[v]] = sigma[(t, t)];
                }
                parts.iter().map(|p| p.exact_term(&sigma)).collect()
            }
        }
    };
    for (j, (p, term)) in parts.into_iter().zip(terms).enumerate() {
        let child_ids: Vec<usize> = p.rows.iter().map(|&v| ids[v]).collect();
        let sub = q.extract_principal_submatrix(&p.rows)?;
        drop(p);
        recurse(&sub, &child_ids, depth + 1, 2 * node + j as u64, s, out, trace)?;
        for (&g, t) in child_ids.iter().zip(term) {
            out[g] += t;
        }
    }
    Ok(())
}
