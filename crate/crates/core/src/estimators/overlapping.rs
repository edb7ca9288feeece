use std::time::Instant;

use rayon::prelude::*;

use super::local::Substructure;
use super::{draw_samples, require_k, EstimatorSettings, IterationSummary, MarginalResult};
use crate::error::{Error, Result};
use crate::krylov::SampleSet;
use crate::partition::{partition_of_unity, Graph, PartitionPlan, UNREACHABLE};
use crate::sparse::SparseMatrix;

fn check_cover(plan: &PartitionPlan, graph: &Graph) -> Result<()> {
    plan.validate(graph)?;
    if plan.separated {
        return Err(Error::InvalidPlan("overlapping RBMC needs a cover plan without a separator".into()));
    }
    Ok(())
}

/// Overlapping RBMC: on each `b_j`, `Q_{b_j b_j}⁻¹` plus the variance of
/// `Q_{b_j b_j}⁻¹ Q_{b_j s_j} u_{s_j}` over shared samples `u`, restricted
/// to the owned set `a_j`.
pub fn overlapping_rbmc(q: &SparseMatrix, graph: &Graph, plan: &PartitionPlan, s: &EstimatorSettings) -> Result<MarginalResult> {
    check_cover(plan, graph)?;
    let mut samples = None;
    let mut sampling_time = 0.0;
    if plan.s.iter().any(|f| !f.is_empty()) {
        require_k(s.k, "overlapping_rbmc")?;
        let t = Instant::now();
        samples = Some(draw_samples(q, None, s)?);
        sampling_time = t.elapsed().as_secs_f64();
    }
    let mut r = overlapping_rbmc_with_samples(q, graph, plan, samples.as_ref(), s)?;
    r.timings.sampling = sampling_time;
    Ok(r)
}

pub fn overlapping_rbmc_with_samples(
    q: &SparseMatrix,
    graph: &Graph,
    plan: &PartitionPlan,
    samples: Option<&SampleSet>,
    s: &EstimatorSettings,
) -> Result<MarginalResult> {
    check_cover(plan, graph)?;
    let needs_samples = plan.s.iter().any(|f| !f.is_empty());
    let set = match (needs_samples, samples) {
        (false, _) => None,
        (true, Some(set)) => {
            require_k(set.len(), "overlapping_rbmc")?;
            Some(set)
        }
        (true, None) => return Err(Error::InvalidArgument("overlapping RBMC needs samples".into())),
    };
    let n = q.n_rows();
    let t0 = Instant::now();
    let parts: Vec<Substructure> = plan
        .b
        .par_iter()
        .zip(&plan.s)
        .map(|(b, f)| Substructure::new(q, b.clone(), f.clone(), s))
        .collect::<Result<_>>()?;
    let t_fact = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let locals: Vec<Vec<f64>> = parts
        .par_iter()
        .map(|p| {
            let mut d = p.inv.diag();
            if let Some(set) = set {
                for (x, t) in d.iter_mut().zip(p.sampled_term(&set.samples)) {
                    *x += t;
                }
            }
            d
        })
        .collect();
    let mut d = vec![0.0; n];
    let mut dist = vec![UNREACHABLE; n];
    for (j, local) in locals.iter().enumerate() {
        let sel = partition_of_unity(plan, j)?;
        sel.scatter(local, &mut d);
        if !plan.s[j].is_empty() {
            let h = graph.hop_distances(&plan.s[j]);
            for &g in &sel.global {
                dist[g] = h[g];
            }
        }
    }
    let k = set.map_or(0, SampleSet::len);
    let mut r = MarginalResult::new("overlapping_rbmc", d, k, plan.l);
    r.partitions = parts.iter().enumerate().map(|(j, p)| p.diagnostics(j, plan.a[j].len())).collect();
    if let Some(set) = set {
        r.sampling = IterationSummary::from_reports(&set.reports);
    }
    r.separator_distance = Some(dist);
    r.timings.factorization = t_fact;
    r.timings.correction = t1.elapsed().as_secs_f64();
    r.check_positive()?;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::{sample_gmrf, LanczosOptions};
    use crate::model::{build_ar1_precision, SlabLayout};
    use crate::partition::{expand_overlap, partition, with_global_separator, TemporalInterval};
    use crate::sparse::{sparse_cholesky, Ordering};

    fn setup(n: usize, parts: usize, l: usize) -> (SparseMatrix, Graph, PartitionPlan) {
        let q = build_ar1_precision(0.95, n).unwrap();
        let g = crate::partition::graph_from_precision(&q).unwrap();
        let p = partition(&g, parts, &TemporalInterval, Some(SlabLayout { n_s: 1, n_t: n })).unwrap();
        let p = expand_overlap(&g, &p, l).unwrap();
        (q, g, p)
    }

    #[test]
    fn full_overlap_is_exact_without_samples() {
        let (q, g, p) = setup(40, 4, 40);
        assert!(p.s.iter().all(Vec::is_empty));
        let r = overlapping_rbmc_with_samples(&q, &g, &p, None, &EstimatorSettings::default()).unwrap();
        let truth = q.to_dense().spd_inverse().unwrap().diag();
        for (a, t) in r.diag_variance.iter().zip(&truth) {
            assert!((a - t).abs() <= 1e-12 * t);
        }
        assert!(r.separator_distance.unwrap().iter().all(|&d| d == UNREACHABLE));
    }

    #[test]
    fn distances_are_from_frontier() {
        let (q, g, p) = setup(99, 2, 10);
        let f = sparse_cholesky(&q, Ordering::AmdLike).unwrap();
        let set = sample_gmrf(&q, &f, 10, 1, &LanczosOptions::default()).unwrap();
        let r = overlapping_rbmc_with_samples(&q, &g, &p, Some(&set), &EstimatorSettings::default()).unwrap();
        let d = r.separator_distance.unwrap();
        assert_eq!(p.s[0], vec![60]);
        assert_eq!(d[0], 60);
        assert_eq!(d[49], 11);
        assert_eq!(p.s[1], vec![39]);
        assert_eq!(d[50], 11);
        assert_eq!(r.k, 10);
        assert_eq!(r.l, 10);
    }

    #[test]
    fn error_decays_with_overlap() {
        // Exact samples make the comparison depend on l only.
        let n = 99;
        let q = build_ar1_precision(0.95, n).unwrap();
        let f = sparse_cholesky(&q, Ordering::AmdLike).unwrap();
        let set = sample_gmrf(&q, &f, 20, 3, &LanczosOptions::default()).unwrap();
        let truth = q.to_dense().spd_inverse().unwrap().diag();
        let mut errs = Vec::new();
        for l in [0, 5, 20] {
            let (_, g, p) = setup(n, 2, l);
            let r = overlapping_rbmc_with_samples(&q, &g, &p, Some(&set), &EstimatorSettings::default()).unwrap();
            let e: f64 = (40..60).map(|i| ((r.diag_variance[i] - truth[i]) / truth[i]).abs()).sum();
            errs.push(e);
        }
        assert!(errs[2] < errs[0], "{errs:?}");
    }

    #[test]
    fn separated_plan_rejected() {
        let (q, g, p) = setup(20, 2, 0);
        let p = with_global_separator(&g, &p).unwrap();
        assert!(matches!(
            overlapping_rbmc(&q, &g, &p, &EstimatorSettings::default()),
            Err(Error::InvalidPlan(_))
        ));
    }
}
