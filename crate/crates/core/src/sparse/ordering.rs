use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::SparseMatrix;

/// Fill-reducing ordering applied before a complete factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    Natural,
    /// Greedy minimum degree on the explicit elimination graph.
    #[default]
    AmdLike,
}

impl Ordering {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "natural" => Some(Ordering::Natural),
            "amd_like" | "amd" | "min_degree" => Some(Ordering::AmdLike),
            _ => None,
        }
    }

    /// Returns `perm` with `perm[new] = old`.
    pub fn compute(self, a: &SparseMatrix) -> Vec<usize> {
        match self {
            Ordering::Natural => (0..a.n_rows()).collect(),
            Ordering::AmdLike => minimum_degree(a),
        }
    }
}

/// Minimum-degree ordering, ties broken by the lowest vertex index.
///
/// Works on the explicit elimination graph; adequate for the desk-scale
/// problems here, not a substitute for a quotient-graph AMD.
pub fn minimum_degree(a: &SparseMatrix) -> Vec<usize> {
    let n = a.n_rows();
    let mut adj: Vec<Vec<usize>> = (0..n)
        .map(|i| a.row(i).0.iter().copied().filter(|&j| j != i).collect())
        .collect();
    let mut eliminated = vec![false; n];
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|i| (adj[i].len(), i)).collect();
    let mut perm = Vec::with_capacity(n);
    let mut merged = Vec::new();

    while let Some((_, v)) = queue.pop_first() {
        eliminated[v] = true;
        perm.push(v);
        let nbrs = std::mem::take(&mut adj[v]);
        for &u in &nbrs {
            queue.remove(&(adj[u].len(), u));
            // adj[u] ∪ nbrs, minus u and v
            merged.clear();
            let (x, y) = (&adj[u], &nbrs);
            let (mut p, mut q) = (0, 0);
            while p < x.len() || q < y.len() {
                let next = match (x.get(p), y.get(q)) {
                    (Some(&a), Some(&b)) if a == b => {
                        p += 1;
                        q += 1;
                        a
                    }
                    (Some(&a), Some(&b)) if a < b => {
                        p += 1;
                        a
                    }
                    (Some(_), Some(&b)) => {
                        q += 1;
                        b
                    }
                    (Some(&a), None) => {
                        p += 1;
                        a
                    }
                    (None, Some(&b)) => {
                        q += 1;
                        b
                    }
                    (None, None) => unreachable!(),
                };
                if next != u && next != v && !eliminated[next] {
                    merged.push(next);
                }
            }
            std::mem::swap(&mut adj[u], &mut merged);
            queue.insert((adj[u].len(), u));
        }
    }
    perm
}
