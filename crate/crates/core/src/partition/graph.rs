use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Undirected graph with sorted adjacency lists and no self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
}

pub const UNREACHABLE: usize = usize::MAX;

impl Graph {
    pub fn from_adjacency(adj: Vec<Vec<usize>>) -> Result<Self> {
        let n = adj.len();
        let mut adj = adj;
        for (i, nb) in adj.iter_mut().enumerate() {
            nb.sort_unstable();
            nb.dedup();
            if nb.iter().any(|&j| j >= n) {
                return Err(Error::InvalidArgument(format!("vertex {i} has a neighbor outside 0..{n}")));
            }
            if nb.binary_search(&i).is_ok() {
                return Err(Error::InvalidArgument(format!("self-loop at vertex {i}")));
            }
        }
        let g = Graph { adj };
        for i in 0..n {
            for &j in g.neighbors(i) {
                if g.adj[j].binary_search(&i).is_err() {
                    return Err(Error::InvalidArgument(format!("edge ({i}, {j}) has no reverse")));
                }
            }
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn n_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i].binary_search(&j).is_ok()
    }

    /// Hop distance from the nearest vertex of `sources` (multi-source BFS).
    pub fn hop_distances(&self, sources: &[usize]) -> Vec<usize> {
        let mut dist = vec![UNREACHABLE; self.n()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s] != 0 {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(v) = queue.pop_front() {
            for &w in &self.adj[v] {
                if dist[w] == UNREACHABLE {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Vertices within `hops` of `set`, sorted.
    pub fn closed_neighborhood(&self, set: &[usize], hops: usize) -> Vec<usize> {
        let mut dist = vec![UNREACHABLE; self.n()];
        let mut frontier: Vec<usize> = Vec::with_capacity(set.len());
        for &v in set {
            if dist[v] == UNREACHABLE {
                dist[v] = 0;
                frontier.push(v);
            }
        }
        let mut out = frontier.clone();
        for h in 1..=hops {
            let mut next = Vec::new();
            for &v in &frontier {
                for &w in &self.adj[v] {
                    if dist[w] == UNREACHABLE {
                        dist[w] = h;
                        next.push(w);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            out.extend_from_slice(&next);
            frontier = next;
        }
        out.sort_unstable();
        out
    }

    /// `N(set) \ set`, sorted.
    pub fn boundary(&self, set: &[usize]) -> Vec<usize> {
        let mut inside = vec![false; self.n()];
        for &v in set {
            inside[v] = true;
        }
        let mut seen = vec![false; self.n()];
        let mut out = Vec::new();
        for &v in set {
            for &w in &self.adj[v] {
                if !inside[w] && !seen[w] {
                    seen[w] = true;
                    out.push(w);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Connected-component label per vertex, ignoring vertices with
    /// `removed[v]` (labelled `UNREACHABLE`).
    pub fn components(&self, removed: &[bool]) -> Vec<usize> {
        let mut label = vec![UNREACHABLE; self.n()];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for s in 0..self.n() {
            if removed[s] || label[s] != UNREACHABLE {
                continue;
            }
            label[s] = next;
            queue.push_back(s);
            while let Some(v) = queue.pop_front() {
                for &w in &self.adj[v] {
                    if !removed[w] && label[w] == UNREACHABLE {
                        label[w] = next;
                        queue.push_back(w);
                    }
                }
            }
            next += 1;
        }
        label
    }
}

/// Graph of the off-diagonal nonzero pattern of a symmetric matrix.
pub fn graph_from_precision(q: &SparseMatrix) -> Result<Graph> {
    if !q.is_square() {
        return Err(Error::DimensionMismatch("graph of a non-square matrix".into()));
    }
    let n = q.n_rows();
    let mut adj = vec![Vec::new(); n];
    for (i, nb) in adj.iter_mut().enumerate() {
        let (cols, vals) = q.row(i);
        nb.extend(cols.iter().zip(vals).filter(|&(&j, &v)| j != i && v != 0.0).map(|(&j, _)| j));
    }
    for i in 0..n {
        for &j in &adj[i] {
            if adj[j].binary_search(&i).is_err() {
                return Err(Error::InvalidArgument(format!("pattern is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(Graph { adj })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_ar1_precision, build_spacetime_precision, SpaceTimeSpec};

    #[test]
    fn diagonal_is_edgeless() {
        let g = graph_from_precision(&SparseMatrix::diagonal(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(g.n_edges(), 0);
    }

    #[test]
    fn ar1_is_path() {
        let g = graph_from_precision(&build_ar1_precision(0.5, 5).unwrap()).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(2), &[1, 3]);
        assert_eq!(g.neighbors(4), &[3]);
        assert_eq!(g.n_edges(), 4);
    }

    #[test]
    fn spacetime_links_adjacent_slabs_only() {
        let spec = SpaceTimeSpec::critical_diffusion(2, 2, 1.0, 3, 1.0, 1.0, 1.0, 1.0).unwrap();
        let q = build_spacetime_precision(&spec, None).unwrap();
        let g = graph_from_precision(&q).unwrap();
        for v in 0..12 {
            let tv = v / 4;
            for &w in g.neighbors(v) {
                assert!((w / 4).abs_diff(tv) <= 1);
            }
            // within a slab K_3 couples all four nodes; across slabs the
            // J_1 ⊗ K_1 term couples the same node and its lattice neighbors
            for w in 0..12 {
                let (sv, sw) = (v % 4, w % 4);
                let lattice_adjacent = sv == sw || (sv ^ sw).count_ones() == 1;
                let expect = match (w / 4).abs_diff(tv) {
                    0 => w != v,
                    1 => lattice_adjacent,
                    _ => false,
                };
                assert_eq!(g.has_edge(v, w), expect, "{v} {w}");
            }
        }
    }

    #[test]
    fn neighborhoods_on_path() {
        let g = graph_from_precision(&build_ar1_precision(0.5, 10).unwrap()).unwrap();
        assert_eq!(g.closed_neighborhood(&[4, 5], 2), vec![2, 3, 4, 5, 6, 7]);
        assert_eq!(g.boundary(&[4, 5]), vec![3, 6]);
        assert_eq!(g.hop_distances(&[0])[9], 9);
        let mut removed = vec![false; 10];
        removed[5] = true;
        let c = g.components(&removed);
        assert_eq!(c[0], c[4]);
        assert_ne!(c[4], c[6]);
        assert_eq!(c[5], UNREACHABLE);
    }

    #[test]
    fn asymmetric_pattern_rejected() {
        let q = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0)]).unwrap();
        assert!(graph_from_precision(&q).is_err());
    }
}
