use std::fs;
use std::path::Path;
use std::time::Instant;

use serde_json::json;

use gmrf::estimators::{
    build_preconditioner, distance_buckets, relative_errors, EstimatorRegistry, EstimatorSettings, IterationSummary,
    MarginalResult, Problem,
};
use gmrf::inference::{marginal_variance_with, posterior_mean_with, PosteriorSummary};
use gmrf::krylov::sample_gmrf;
use gmrf::model::{
    assemble_posterior_blocks, build_ar1_precision, build_spacetime_precision, build_spatial_precision, load_model,
    random_latent_model, save_model, simulate_observations, LatentModel, SlabLayout, SpaceTimeSpec, SpatialSpec,
};
use gmrf::oracle::{correlation_decay, dense_inverse_diag};
use gmrf::partition::{
    expand_overlap, graph_from_precision, partition, with_global_separator, Graph, PartitionPlan, StrategyRegistry,
    UNREACHABLE,
};
use gmrf::sparse::{DenseMatrix, SparseMatrix};

use crate::config::{ExperimentConfig, ModelKind};
use crate::CliError;

/// Builds the configured model in memory. Fields other than `random` are
/// observed directly at every node; covariates are an intercept and powers
/// of the normalized node index.
pub fn build_model(cfg: &ExperimentConfig) -> Result<LatentModel, CliError> {
    let m = &cfg.model;
    let (q_u, layout) = match m.kind {
        ModelKind::Random => return Ok(random_latent_model(m.n, m.n_beta, m.seed)?),
        ModelKind::Ar1 => (build_ar1_precision(m.phi, m.n)?, Some(SlabLayout { n_s: 1, n_t: m.n })),
        ModelKind::Spatial => {
            let spec = SpatialSpec::new(m.nx, m.ny, m.spacing, m.kappa, m.tau, m.alpha)?;
            (build_spatial_precision(&spec)?, None)
        }
        ModelKind::SpaceTime => {
            let spec =
                SpaceTimeSpec::critical_diffusion(m.nx, m.ny, m.spacing, m.n_t, m.dt, m.gamma_t, m.gamma_s, m.gamma_e)?;
            (build_spacetime_precision(&spec, None)?, Some(SlabLayout { n_s: m.nx * m.ny, n_t: m.n_t }))
        }
    };
    let n = q_u.n_rows();
    let nb = m.n_beta;
    let a_beta = DenseMatrix::from_row_major(
        n,
        nb,
        (0..n).flat_map(|i| (0..nb).map(move |k| (i as f64 / n as f64).powi(k as i32))).collect(),
    )?;
    let a_u = SparseMatrix::identity(n);
    let beta = vec![1.0; nb];
    let y = if m.tau_y > 0.0 {
        simulate_observations(&q_u, &a_u, &a_beta, &beta, m.tau_y, m.seed)?
    } else {
        vec![0.0; n]
    };
    let model = LatentModel { q_u, q_beta: SparseMatrix::diagonal(&vec![1e-2; nb]), a_u, a_beta, tau_y: m.tau_y, y, layout };
    model.validate()?;
    Ok(model)
}

fn model_dir(cfg: &ExperimentConfig) -> Result<&Path, CliError> {
    cfg.model
        .dir
        .as_deref()
        .ok_or_else(|| CliError::Usage("model.dir is not set; run `gmrf build` and pass --set model.dir=DIR".into()))
}

fn read_model(cfg: &ExperimentConfig) -> Result<LatentModel, CliError> {
    let dir = model_dir(cfg)?;
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("model directory {} does not exist", dir.display())));
    }
    Ok(load_model(dir)?)
}

fn write(out: &Path, name: &str, text: &str) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(gmrf::Error::from)?;
    fs::write(out.join(name), text).map_err(gmrf::Error::from)?;
    Ok(())
}

fn write_json(out: &Path, name: &str, v: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(gmrf::Error::from)?;
    write(out, name, &(text + "\n"))
}

/// Partition plan shaped for the configured estimator: a global separator
/// for `parallel_rbmc`, `l`-hop overlap for `overlapping_rbmc`, none for the
/// estimators that do not use one.
pub fn make_plan(
    graph: &Graph,
    layout: Option<SlabLayout>,
    cfg: &ExperimentConfig,
) -> Result<Option<PartitionPlan>, CliError> {
    let needs = matches!(cfg.estimator.as_str(), "parallel_rbmc" | "overlapping_rbmc")
        || (cfg.estimator == "basic_rbmc" && cfg.settings.precond == gmrf::estimators::PrecondKind::BlockJacobi);
    if !needs {
        return Ok(None);
    }
    let name = match (&cfg.partition.strategy, layout) {
        (Some(s), _) => s.as_str(),
        (None, Some(_)) => "temporal_interval",
        (None, None) => "recursive_bisection",
    };
    let registry = StrategyRegistry::default();
    let plan = partition(graph, cfg.partition.parts, registry.get(name)?, layout)?;
    let plan = match cfg.estimator.as_str() {
        "parallel_rbmc" if plan.parts() > 1 => with_global_separator(graph, &plan)?,
        "overlapping_rbmc" => expand_overlap(graph, &plan, cfg.partition.l)?,
        _ => plan,
    };
    Ok(Some(plan))
}

pub fn run_estimator(
    q: &SparseMatrix,
    graph: &Graph,
    plan: Option<&PartitionPlan>,
    name: &str,
    settings: &EstimatorSettings,
) -> Result<MarginalResult, CliError> {
    let registry = EstimatorRegistry::default();
    let problem = Problem { q, graph, plan };
    Ok(registry.get(name)?.estimate(&problem, settings)?)
}

fn plan_json(plan: Option<&PartitionPlan>) -> serde_json::Value {
    match plan {
        None => serde_json::Value::Null,
        Some(p) => json!({
            "J": p.parts(),
            "l": p.l,
            "strategy": p.strategy,
            "separated": p.separated,
            "separator_size": p.separator.len(),
            "owned": p.a.iter().map(Vec::len).collect::<Vec<_>>(),
            "local": p.b.iter().map(Vec::len).collect::<Vec<_>>(),
        }),
    }
}

pub fn cmd_build(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let model = build_model(cfg)?;
    let dir = cfg.model.dir.as_deref().unwrap_or(&cfg.out);
    save_model(&model, dir, &cfg.model_meta())?;
    eprintln!("wrote {} model with n = {} to {}", cfg.model.kind.name(), model.n_latent(), dir.display());
    Ok(())
}

/// Posterior mean, `diag(Q_uu⁻¹)` from the configured estimator and the
/// fixed-effects variance correction.
pub fn cmd_infer(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let model = read_model(cfg)?;
    let t = Instant::now();
    let blocks = assemble_posterior_blocks(&model)?;
    let mean = posterior_mean_with(&model, &blocks, &cfg.settings)?;
    let t_mean = t.elapsed().as_secs_f64();

    let graph = graph_from_precision(&blocks.q_uu)?;
    let plan = make_plan(&graph, model.layout, cfg)?;
    let diag = run_estimator(&blocks.q_uu, &graph, plan.as_ref(), &cfg.estimator, &cfg.settings)?;

    let t = Instant::now();
    let var_u = marginal_variance_with(&blocks, &diag, &mean.s_inv, &cfg.settings)?;
    let t_var = t.elapsed().as_secs_f64();
    let summary = PosteriorSummary::new(&mean, var_u);

    write(&cfg.out, "posterior.csv", &summary.to_csv())?;
    write(&cfg.out, "marginal.csv", &diag.to_csv())?;
    if let Some(p) = &plan {
        write(&cfg.out, "plan.json", &(p.to_json()? + "\n"))?;
    }
    let report = json!({
        "v": 1,
        "command": "infer",
        "n": model.n_latent(),
        "n_beta": model.n_beta(),
        "posterior": summary.to_json(),
        "estimator": diag.summary_json(None)?,
        "plan": plan_json(plan.as_ref()),
        "timings": {
            "posterior_mean": t_mean,
            "factorization": diag.timings.factorization,
            "sampling": diag.timings.sampling,
            "correction": diag.timings.correction,
            "fixed_effects_correction": t_var,
        },
    });
    write_json(&cfg.out, "report.json", &report)?;
    Ok(())
}

/// `K` draws from `N(0, Q_uu⁻¹)`, one column per sample.
pub fn cmd_sample(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let model = read_model(cfg)?;
    let blocks = assemble_posterior_blocks(&model)?;
    let s = &cfg.settings;
    let t = Instant::now();
    let pre = build_preconditioner(&blocks.q_uu, s.precond, None)?;
    let set = sample_gmrf(&blocks.q_uu, &pre, s.k, s.seed, &s.lanczos)?;
    set.require_converged()?;
    write(&cfg.out, "samples.csv", &set.to_csv())?;
    let report = json!({
        "v": 1,
        "command": "sample",
        "n": model.n_latent(),
        "K": set.len(),
        "seed": s.seed,
        "sampling": IterationSummary::from_reports(&set.reports),
        "seconds": t.elapsed().as_secs_f64(),
    });
    write_json(&cfg.out, "sample_report.json", &report)?;
    Ok(())
}

/// Per-node errors against the dense oracle over `replications` runs with
/// seeds `seed, seed + 1, ...`. The estimate column is the first run.
pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let model = read_model(cfg)?;
    let blocks = assemble_posterior_blocks(&model)?;
    let q = &blocks.q_uu;
    let truth = dense_inverse_diag(q)?;
    let graph = graph_from_precision(q)?;
    let plan = make_plan(&graph, model.layout, cfg)?;

    let n = q.n_rows();
    let mut sq = vec![0.0; n];
    let mut first: Option<MarginalResult> = None;
    for r in 0..cfg.replications {
        let s = EstimatorSettings { seed: cfg.settings.seed.wrapping_add(r as u64), ..cfg.settings.clone() };
        let res = run_estimator(q, &graph, plan.as_ref(), &cfg.estimator, &s)?;
        for (acc, e) in sq.iter_mut().zip(relative_errors(&res.diag_variance, &truth)?) {
            *acc += e * e;
        }
        first.get_or_insert(res);
    }
    let first = first.expect("at least one replication");
    let rmse: Vec<f64> = sq.iter().map(|s| (s / cfg.replications as f64).sqrt()).collect();
    let err = relative_errors(&first.diag_variance, &truth)?;
    let dist = first.separator_distance.clone().unwrap_or_else(|| vec![UNREACHABLE; n]);

    let mut csv = String::from("node_id,estimate,truth,relative_error,distance,relative_rmse\n");
    for i in 0..n {
        let d = if dist[i] == UNREACHABLE { String::new() } else { dist[i].to_string() };
        csv.push_str(&format!("{i},{:e},{:e},{:e},{d},{:e}\n", first.diag_variance[i], truth[i], err[i], rmse[i]));
    }
    write(&cfg.out, "errors.csv", &csv)?;

    let buckets: Vec<serde_json::Value> = distance_buckets(&err, &dist)
        .into_iter()
        .zip(distance_buckets(&rmse, &dist))
        .map(|((d, c, e), (_, _, r))| json!({"distance": d, "count": c, "mean_relative_error": e, "mean_relative_rmse": r}))
        .collect();
    let sources: Vec<usize> = match &plan {
        Some(p) if p.separated => p.separator.clone(),
        Some(p) => {
            let mut s: Vec<usize> = p.s.concat();
            s.sort_unstable();
            s.dedup();
            s
        }
        None => Vec::new(),
    };
    let decay: Vec<serde_json::Value> = correlation_decay(q, &graph, &sources)?
        .into_iter()
        .enumerate()
        .map(|(d, c)| json!({"distance": d, "max_abs_correlation": c}))
        .collect();
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let summary = json!({
        "v": 1,
        "command": "compare",
        "estimator": first.estimator,
        "K": first.k,
        "l": first.l,
        "n": n,
        "replications": cfg.replications,
        "max_relative_error": max(&err),
        "mean_relative_error": mean(&err),
        "max_relative_rmse": max(&rmse),
        "mean_relative_rmse": mean(&rmse),
        "buckets": buckets,
        "correlation_decay": decay,
        "plan": plan_json(plan.as_ref()),
    });
    write_json(&cfg.out, "summary.json", &summary)?;
    Ok(())
}

/// Phase timings of the configured estimator for each worker count, and
/// whether results agree with the first worker count to 1e-13.
pub fn cmd_bench(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let model = match &cfg.model.dir {
        Some(_) => read_model(cfg)?,
        None => build_model(cfg)?,
    };
    let blocks = assemble_posterior_blocks(&model)?;
    let q = &blocks.q_uu;
    let graph = graph_from_precision(q)?;
    let plan = make_plan(&graph, model.layout, cfg)?;

    let mut rows = Vec::new();
    let mut reference: Option<Vec<f64>> = None;
    let mut identical = true;
    for &w in &cfg.bench_workers {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {w} workers: {e}")))?;
        let t = Instant::now();
        let r = pool.install(|| run_estimator(q, &graph, plan.as_ref(), &cfg.estimator, &cfg.settings))?;
        let total = t.elapsed().as_secs_f64();
        let diff = match &reference {
            None => 0.0,
            Some(base) => base
                .iter()
                .zip(&r.diag_variance)
                .map(|(a, b)| ((a - b) / a).abs())
                .fold(0.0, f64::max),
        };
        identical &= diff <= 1e-13;
        reference.get_or_insert(r.diag_variance.clone());
        rows.push(json!({
            "workers": w,
            "total": total,
            "factorization": r.timings.factorization,
            "sampling": r.timings.sampling,
            "correction": r.timings.correction,
            "partition_loop": r.timings.factorization + r.timings.correction,
            "max_relative_difference": diff,
        }));
    }
    let report = json!({
        "v": 1,
        "command": "bench",
        "estimator": cfg.estimator,
        "n": q.n_rows(),
        "available_parallelism": std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        "identical": identical,
        "runs": rows,
    });
    write_json(&cfg.out, "bench.json", &report)?;
    if !identical {
        return Err(CliError::Core(gmrf::Error::Numerical("results differ across worker counts".into())));
    }
    Ok(())
}
