use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Graph, PartitionStrategy, UNREACHABLE};
use crate::error::{Error, Result};
use crate::model::SlabLayout;

/// Owned sets `a`, overlapped sets `b ⊇ a`, frontiers `s[j] = N(b[j]) \ b[j]`
/// and an optional global separator. All index sets are sorted.
///
/// A *cover* plan has `∪ a = V`. A *separated* plan has `∪ a = V \ separator`
/// and no edge between distinct `a[i]`, `a[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub v: u32,
    pub n: usize,
    pub strategy: String,
    pub l: usize,
    pub separated: bool,
    pub a: Vec<Vec<usize>>,
    pub b: Vec<Vec<usize>>,
    pub s: Vec<Vec<usize>>,
    pub separator: Vec<usize>,
}

/// Maps positions in `b[j]` to the global indices of `a[j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selector {
    pub local: Vec<usize>,
    pub global: Vec<usize>,
}

impl Selector {
    /// Restricts a `b[j]`-indexed vector to the owned entries.
    pub fn apply(&self, x_local: &[f64]) -> Vec<f64> {
        self.local.iter().map(|&p| x_local[p]).collect()
    }

    /// Writes the owned entries of `x_local` into the global vector.
    pub fn scatter(&self, x_local: &[f64], out: &mut [f64]) {
        for (&p, &g) in self.local.iter().zip(&self.global) {
            out[g] = x_local[p];
        }
    }
}

impl PartitionPlan {
    pub fn parts(&self) -> usize {
        self.a.len()
    }

    /// Plan with `b = a` and `s[j] = N(a[j]) \ a[j]`.
    pub fn from_sets(graph: &Graph, strategy: &str, a: Vec<Vec<usize>>, separator: Vec<usize>) -> Result<Self> {
        let mut a = a;
        for p in &mut a {
            p.sort_unstable();
        }
        let mut separator = separator;
        separator.sort_unstable();
        let separated = !separator.is_empty();
        let s = a.iter().map(|p| graph.boundary(p)).collect();
        let plan = PartitionPlan {
            v: 1,
            n: graph.n(),
            strategy: strategy.to_string(),
            l: 0,
            separated,
            b: a.clone(),
            a,
            s,
            separator,
        };
        plan.validate(graph)?;
        Ok(plan)
    }

    /// Part owning each vertex; separator vertices map to `UNREACHABLE`.
    pub fn owner(&self) -> Vec<usize> {
        let mut o = vec![UNREACHABLE; self.n];
        for (j, p) in self.a.iter().enumerate() {
            for &v in p {
                o[v] = j;
            }
        }
        o
    }

    pub fn validate(&self, graph: &Graph) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPlan(m));
        if self.n != graph.n() {
            return bad(format!("plan for {} vertices, graph has {}", self.n, graph.n()));
        }
        let j = self.a.len();
        if j == 0 || self.b.len() != j || self.s.len() != j {
            return bad("a, b, s must have the same nonzero length".into());
        }
        let mut seen = vec![false; self.n];
        for (idx, p) in self.a.iter().enumerate() {
            if p.is_empty() {
                return bad(format!("part {idx} is empty"));
            }
            for &v in p {
                if v >= self.n {
                    return bad(format!("vertex {v} out of range"));
                }
                if seen[v] {
                    return bad(format!("vertex {v} owned twice"));
                }
                seen[v] = true;
            }
        }
        for &v in &self.separator {
            if v >= self.n || seen[v] {
                return bad(format!("separator vertex {v} is out of range or owned"));
            }
            seen[v] = true;
        }
        if let Some(v) = seen.iter().position(|&x| !x) {
            return bad(format!("vertex {v} is neither owned nor in the separator"));
        }
        for idx in 0..j {
            if !is_sorted_subset(&self.a[idx], &self.b[idx]) {
                return bad(format!("a[{idx}] is not contained in b[{idx}]"));
            }
            if graph.boundary(&self.b[idx]) != self.s[idx] {
                return bad(format!("s[{idx}] is not N(b[{idx}]) \\ b[{idx}]"));
            }
        }
        if self.separated {
            let mut removed = vec![false; self.n];
            for &v in &self.separator {
                removed[v] = true;
            }
            let comp = graph.components(&removed);
            let owner = self.owner();
            let mut comp_owner = vec![UNREACHABLE; self.n];
            for v in 0..self.n {
                if removed[v] {
                    continue;
                }
                let c = comp[v];
                if comp_owner[c] == UNREACHABLE {
                    comp_owner[c] = owner[v];
                } else if comp_owner[c] != owner[v] {
                    return bad(format!("parts {} and {} are connected outside the separator", comp_owner[c], owner[v]));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str, graph: &Graph) -> Result<Self> {
        let p: PartitionPlan = serde_json::from_str(text)?;
        p.validate(graph)?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path, graph: &Graph) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?, graph)
    }
}

fn is_sorted_subset(small: &[usize], big: &[usize]) -> bool {
    let mut it = big.iter();
    small.iter().all(|x| it.by_ref().any(|y| y == x))
}

/// Cover plan from a strategy (`l = 0`).
pub fn partition(
    graph: &Graph,
    parts: usize,
    strategy: &dyn PartitionStrategy,
    layout: Option<SlabLayout>,
) -> Result<PartitionPlan> {
    if parts == 0 {
        return Err(Error::InvalidArgument("J must be at least 1".into()));
    }
    if parts > graph.n() {
        return Err(Error::InvalidArgument(format!("J = {parts} exceeds n = {}", graph.n())));
    }
    let a = strategy.split(graph, parts, layout)?;
    PartitionPlan::from_sets(graph, strategy.name(), a, Vec::new())
}

/// Moves the lower-part endpoint of every cut edge into a global separator,
/// leaving pairwise non-adjacent parts.
pub fn with_global_separator(graph: &Graph, plan: &PartitionPlan) -> Result<PartitionPlan> {
    if plan.separated {
        return Ok(plan.clone());
    }
    let owner = plan.owner();
    let mut in_sep = vec![false; graph.n()];
    for (v, flag) in in_sep.iter_mut().enumerate() {
        *flag = graph.neighbors(v).iter().any(|&w| owner[w] > owner[v]);
    }
    let separator: Vec<usize> = (0..graph.n()).filter(|&v| in_sep[v]).collect();
    let a: Vec<Vec<usize>> = plan.a.iter().map(|p| p.iter().copied().filter(|&v| !in_sep[v]).collect()).collect();
    if let Some(j) = a.iter().position(Vec::is_empty) {
        return Err(Error::InvalidPlan(format!("part {j} is swallowed by the separator")));
    }
    let mut out = PartitionPlan::from_sets(graph, &plan.strategy, a, separator)?;
    out.separated = true;
    Ok(out)
}

/// `b[j]` = `l`-hop closed neighborhood of `a[j]`, `s[j]` its frontier.
pub fn expand_overlap(graph: &Graph, plan: &PartitionPlan, l: usize) -> Result<PartitionPlan> {
    let mut out = plan.clone();
    out.l = l;
    out.b = plan.a.iter().map(|p| graph.closed_neighborhood(p, l)).collect();
    out.s = out.b.iter().map(|p| graph.boundary(p)).collect();
    Ok(out)
}

pub fn partition_of_unity(plan: &PartitionPlan, j: usize) -> Result<Selector> {
    let (a, b) = match (plan.a.get(j), plan.b.get(j)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::IndexOutOfRange { index: j, dim: plan.parts() }),
    };
    let mut local = Vec::with_capacity(a.len());
    for &v in a {
        let p = b.binary_search(&v).map_err(|_| Error::InvalidPlan(format!("a[{j}] not contained in b[{j}]")))?;
        local.push(p);
    }
    Ok(Selector { local, global: a.clone() })
}
