use std::collections::{BTreeMap, VecDeque};

use super::Graph;
use crate::error::{Error, Result};
use crate::model::SlabLayout;

/// Splits the vertex set into `parts` disjoint, covering, sorted sets.
pub trait PartitionStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn split(&self, graph: &Graph, parts: usize, layout: Option<SlabLayout>) -> Result<Vec<Vec<usize>>>;
}

/// Contiguous blocks of time slabs; earlier blocks take the remainder.
#[derive(Debug, Default, Clone, Copy)]
pub struct TemporalInterval;

impl PartitionStrategy for TemporalInterval {
    fn name(&self) -> &'static str {
        "temporal_interval"
    }

    fn split(&self, graph: &Graph, parts: usize, layout: Option<SlabLayout>) -> Result<Vec<Vec<usize>>> {
        let layout = layout
            .ok_or_else(|| Error::InvalidArgument("temporal_interval needs slab metadata (n_s, n_t)".into()))?;
        if layout.n() != graph.n() {
            return Err(Error::DimensionMismatch(format!(
                "slab layout {}x{} does not match graph with {} vertices",
                layout.n_s,
                layout.n_t,
                graph.n()
            )));
        }
        if parts > layout.n_t {
            return Err(Error::InvalidArgument(format!("J = {parts} exceeds n_t = {}", layout.n_t)));
        }
        let base = layout.n_t / parts;
        let extra = layout.n_t % parts;
        let mut out = Vec::with_capacity(parts);
        let mut t0 = 0;
        for j in 0..parts {
            let len = base + usize::from(j < extra);
            out.push((t0 * layout.n_s..(t0 + len) * layout.n_s).collect());
            t0 += len;
        }
        Ok(out)
    }
}

/// Recursive bisection along breadth-first level orderings rooted at a
/// pseudo-peripheral vertex.
#[derive(Debug, Default, Clone, Copy)]
pub struct RecursiveBisection;

impl PartitionStrategy for RecursiveBisection {
    fn name(&self) -> &'static str {
        "recursive_bisection"
    }

    fn split(&self, graph: &Graph, parts: usize, _layout: Option<SlabLayout>) -> Result<Vec<Vec<usize>>> {
        let mut out = Vec::with_capacity(parts);
        let mut in_set = vec![false; graph.n()];
        bisect_into(graph, (0..graph.n()).collect(), parts, &mut in_set, &mut out);
        out.sort_by_key(|p| p[0]);
        Ok(out)
    }
}

fn bisect_into(graph: &Graph, verts: Vec<usize>, parts: usize, in_set: &mut [bool], out: &mut Vec<Vec<usize>>) {
    if parts == 1 {
        out.push(verts);
        return;
    }
    let left_parts = parts.div_ceil(2);
    let cut = ((verts.len() * left_parts) as f64 / parts as f64).round() as usize;
    let cut = cut.clamp(left_parts, verts.len() - (parts - left_parts));
    let order = level_order(graph, &verts, in_set);
    let mut left = order[..cut].to_vec();
    let mut right = order[cut..].to_vec();
    left.sort_unstable();
    right.sort_unstable();
    bisect_into(graph, left, left_parts, in_set, out);
    bisect_into(graph, right, parts - left_parts, in_set, out);
}

/// BFS order of the induced subgraph on `verts` (sorted), restarted at the
/// lowest unvisited vertex for each component.
fn level_order(graph: &Graph, verts: &[usize], in_set: &mut [bool]) -> Vec<usize> {
    for &v in verts {
        in_set[v] = true;
    }
    let mut stamp: std::collections::HashMap<usize, usize> = std::collections::HashMap::with_capacity(verts.len());
    let mut sweep = 0usize;
    let mut bfs = |root: usize, in_set: &[bool]| -> Vec<usize> {
        sweep += 1;
        let mut order = vec![root];
        let mut queue = VecDeque::from([root]);
        stamp.insert(root, sweep);
        while let Some(v) = queue.pop_front() {
            for &w in graph.neighbors(v) {
                if in_set[w] && stamp.get(&w) != Some(&sweep) {
                    stamp.insert(w, sweep);
                    order.push(w);
                    queue.push_back(w);
                }
            }
        }
        order
    };
    let mut order = Vec::with_capacity(verts.len());
    let mut done = vec![false; graph.n()];
    for &s in verts {
        if done[s] {
            continue;
        }
        // two sweeps give a pseudo-peripheral root
        let far = *bfs(s, in_set).last().expect("non-empty component");
        let comp = bfs(far, in_set);
        for &v in &comp {
            done[v] = true;
        }
        order.extend(comp);
    }
    for &v in verts {
        in_set[v] = false;
    }
    order
}

/// Strategies by name.
pub struct StrategyRegistry {
    entries: BTreeMap<&'static str, Box<dyn PartitionStrategy>>,
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        let mut r = StrategyRegistry { entries: BTreeMap::new() };
        r.register(Box::new(TemporalInterval));
        r.register(Box::new(RecursiveBisection));
        r
    }
}

impl StrategyRegistry {
    pub fn register(&mut self, s: Box<dyn PartitionStrategy>) {
        self.entries.insert(s.name(), s);
    }

    pub fn get(&self, name: &str) -> Result<&dyn PartitionStrategy> {
        self.entries
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::Unknown { kind: "partition strategy", name: name.to_string() })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_ar1_precision, build_spatial_precision, SpatialSpec};
    use crate::partition::graph_from_precision;

    fn path(n: usize) -> Graph {
        graph_from_precision(&build_ar1_precision(0.5, n).unwrap()).unwrap()
    }

    #[test]
    fn temporal_path_into_chains() {
        let parts = TemporalInterval.split(&path(10), 5, Some(SlabLayout { n_s: 1, n_t: 10 })).unwrap();
        assert_eq!(parts, vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7], vec![8, 9]]);
    }

    #[test]
    fn temporal_requires_layout() {
        assert!(TemporalInterval.split(&path(10), 2, None).is_err());
    }

    #[test]
    fn temporal_sizes_near_equal() {
        let layout = SlabLayout { n_s: 3, n_t: 7 };
        let g = Graph::from_adjacency(vec![Vec::new(); 21]).unwrap();
        let parts = TemporalInterval.split(&g, 3, Some(layout)).unwrap();
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![9, 6, 6]);
    }

    #[test]
    fn bisection_balanced_on_lattice() {
        let spec = SpatialSpec::new(12, 12, 1.0, 0.5, 1.0, 1).unwrap();
        let g = graph_from_precision(&build_spatial_precision(&spec).unwrap()).unwrap();
        for j in 1..=5 {
            let parts = RecursiveBisection.split(&g, j, None).unwrap();
            assert_eq!(parts.len(), j);
            let mut all: Vec<usize> = parts.concat();
            all.sort_unstable();
            assert_eq!(all, (0..144).collect::<Vec<_>>());
            let (mn, mx) = parts.iter().fold((usize::MAX, 0), |(a, b), p| (a.min(p.len()), b.max(p.len())));
            assert!(mx - mn <= 144 / j / 4 + 1, "{j}: {mn}..{mx}");
        }
    }

    #[test]
    fn bisection_of_path_is_contiguous() {
        let parts = RecursiveBisection.split(&path(99), 2, None).unwrap();
        assert_eq!(parts[0], (0..49).collect::<Vec<_>>());
        assert_eq!(parts[1], (49..99).collect::<Vec<_>>());
    }

    #[test]
    fn registry_lookup() {
        let r = StrategyRegistry::default();
        assert_eq!(r.names(), vec!["recursive_bisection", "temporal_interval"]);
        assert!(r.get("metis").is_err());
    }
}
