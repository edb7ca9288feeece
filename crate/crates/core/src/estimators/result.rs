use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krylov::SolveReport;
use crate::partition::UNREACHABLE;

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub factorization: f64,
    pub sampling: f64,
    pub correction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionDiagnostics {
    pub part: usize,
    pub owned: usize,
    pub local: usize,
    pub frontier: usize,
    pub factor_nnz: usize,
    pub dense: bool,
}

/// Iteration statistics over a batch of Krylov runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub count: usize,
    pub max_iterations: usize,
    pub mean_iterations: f64,
    pub max_residual: f64,
    pub all_converged: bool,
}

impl IterationSummary {
    pub fn from_reports(reports: &[SolveReport]) -> Self {
        if reports.is_empty() {
            return IterationSummary { all_converged: true, ..Default::default() };
        }
        IterationSummary {
            count: reports.len(),
            max_iterations: reports.iter().map(|r| r.iterations).max().unwrap_or(0),
            mean_iterations: reports.iter().map(|r| r.iterations as f64).sum::<f64>() / reports.len() as f64,
            max_residual: reports.iter().map(|r| r.final_residual).fold(0.0, f64::max),
            all_converged: reports.iter().all(|r| r.converged),
        }
    }
}

/// Estimated `diag(Q⁻¹)` with provenance and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalResult {
    pub diag_variance: Vec<f64>,
    pub estimator: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub l: usize,
    pub partitions: Vec<PartitionDiagnostics>,
    pub sampling: IterationSummary,
    pub solves: IterationSummary,
    /// Hop distance from each node to the separator its estimate depends on;
    /// `None` when the estimator has no separator.
    pub separator_distance: Option<Vec<usize>>,
    /// Nodes flagged as the least accurate (sampled separator entries).
    pub low_accuracy: Vec<usize>,
    pub warnings: Vec<String>,
    pub timings: PhaseTimings,
}

impl MarginalResult {
    pub fn new(estimator: &str, diag_variance: Vec<f64>, k: usize, l: usize) -> Self {
        MarginalResult {
            diag_variance,
            estimator: estimator.to_string(),
            k,
            l,
            partitions: Vec::new(),
            sampling: IterationSummary { all_converged: true, ..Default::default() },
            solves: IterationSummary { all_converged: true, ..Default::default() },
            separator_distance: None,
            low_accuracy: Vec::new(),
            warnings: Vec::new(),
            timings: PhaseTimings::default(),
        }
    }

    pub fn n(&self) -> usize {
        self.diag_variance.len()
    }

    /// Errors if some entry is not strictly positive and finite.
    pub fn check_positive(&self) -> Result<()> {
        match self.diag_variance.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            None => Ok(()),
            Some(i) => Err(Error::Numerical(format!(
                "{} produced a non-positive variance {:e} at node {i}",
                self.estimator, self.diag_variance[i]
            ))),
        }
    }

    /// `node_id,variance,estimator,K,l`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("node_id,variance,estimator,K,l\n");
        for (i, v) in self.diag_variance.iter().enumerate() {
            s.push_str(&format!("{i},{v:e},{},{},{}\n", self.estimator, self.k, self.l));
        }
        s
    }

    /// Summary document; with `truth`, adds relative-error statistics.
    pub fn summary_json(&self, truth: Option<&[f64]>) -> Result<serde_json::Value> {
        let mut v = serde_json::json!({
            "v": 1,
            "estimator": self.estimator,
            "K": self.k,
            "l": self.l,
            "n": self.n(),
            "partitions": self.partitions,
            "sampling": self.sampling,
            "solves": self.solves,
            "low_accuracy": self.low_accuracy,
            "warnings": self.warnings,
            "timings": self.timings,
        });
        if let Some(t) = truth {
            let e = relative_errors(&self.diag_variance, t)?;
            let max = e.iter().copied().fold(0.0, f64::max);
            let mean = e.iter().sum::<f64>() / e.len().max(1) as f64;
            v["max_relative_error"] = serde_json::json!(max);
            v["mean_relative_error"] = serde_json::json!(mean);
        }
        Ok(v)
    }
}

pub fn relative_errors(estimate: &[f64], truth: &[f64]) -> Result<Vec<f64>> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimate of length {} against truth of length {}",
            estimate.len(),
            truth.len()
        )));
    }
    Ok(estimate.iter().zip(truth).map(|(e, t)| ((e - t) / t).abs()).collect())
}

/// Mean relative error per hop-distance bucket: `(distance, count, mean)`.
/// Nodes without a separator are bucketed under `None`.
pub fn distance_buckets(errors: &[f64], distance: &[usize]) -> Vec<(Option<usize>, usize, f64)> {
    let mut map: std::collections::BTreeMap<Option<usize>, (usize, f64)> = Default::default();
    for (&e, &d) in errors.iter().zip(distance) {
        let key = (d != UNREACHABLE).then_some(d);
        let slot = map.entry(key).or_default();
        slot.0 += 1;
        slot.1 += e;
    }
    map.into_iter().map(|(d, (c, s))| (d, c, s / c as f64)).collect()
}
