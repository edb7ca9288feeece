use std::time::Instant;

use rayon::prelude::*;

use super::{build_preconditioner, EstimatorSettings, IterationSummary, MarginalResult};
use crate::error::{Error, Result};
use crate::krylov::cg_solve;
use crate::partition::Graph;
use crate::sparse::SparseMatrix;

/// Greedy coloring in which vertices within `p` hops get distinct colors
/// (a coloring of the graph of `Q^p`). Vertices are colored in index order
/// with the smallest admissible color.
pub fn distance_coloring(graph: &Graph, p: usize) -> Vec<usize> {
    let n = graph.n();
    let mut color = vec![usize::MAX; n];
    let mut stamp = vec![usize::MAX; n];
    let mut used = Vec::new();
    let mut frontier = Vec::new();
    let mut next = Vec::new();
    for v in 0..n {
        used.clear();
        stamp[v] = v;
        frontier.clear();
        frontier.push(v);
        for _ in 0..p {
            next.clear();
            for &x in &frontier {
                for &w in graph.neighbors(x) {
                    if stamp[w] != v {
                        stamp[w] = v;
                        next.push(w);
                        if color[w] != usize::MAX {
                            used.push(color[w]);
                        }
                    }
                }
            }
            std::mem::swap(&mut frontier, &mut next);
            if frontier.is_empty() {
                break;
            }
        }
        used.sort_unstable();
        used.dedup();
        let mut c = 0;
        for &u in &used {
            if u == c {
                c += 1;
            } else if u > c {
                break;
            }
        }
        color[v] = c;
    }
    color
}

/// `diag(Q⁻¹) ≈ diag(Q⁻¹ Z Zᵀ) ⊘ diag(Z Zᵀ)` with one 0/1 probe per color of
/// a distance-`p` coloring.
pub fn probing_diag(q: &SparseMatrix, graph: &Graph, s: &EstimatorSettings) -> Result<MarginalResult> {
    if s.p == 0 {
        return Err(Error::InvalidArgument("probing distance p must be at least 1".into()));
    }
    let n = q.n_rows();
    let color = distance_coloring(graph, s.p);
    let n_colors = color.iter().copied().max().map_or(0, |c| c + 1);
    let t0 = Instant::now();
    let pre = build_preconditioner(q, s.precond, None)?;
    let t_fact = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let solved: Vec<(Vec<f64>, _)> = (0..n_colors)
        .into_par_iter()
        .map(|c| {
            let z: Vec<f64> = color.iter().map(|&k| if k == c { 1.0 } else { 0.0 }).collect();
            let (x, rep) = cg_solve(q, Some(&pre), &z, s.cg_rtol, s.cg_maxit)?;
            Ok((x, rep))
        })
        .collect::<Result<_>>()?;
    let d: Vec<f64> = (0..n).map(|i| solved[color[i]].0[i]).collect();
    let reports: Vec<_> = solved.iter().map(|x| x.1).collect();
    let mut r = MarginalResult::new("probing", d, n_colors, s.p);
    r.solves = IterationSummary::from_reports(&reports);
    if !r.solves.all_converged {
        return Err(Error::NotConverged("a probing solve hit cg_maxit".into()));
    }
    if 2 * n_colors > n {
        r.warnings.push(format!("{n_colors} colors for {n} nodes: probing is no cheaper than exact inversion"));
    }
    r.timings.factorization = t_fact;
    r.timings.correction = t1.elapsed().as_secs_f64();
    r.check_positive()?;
    Ok(r)
}
