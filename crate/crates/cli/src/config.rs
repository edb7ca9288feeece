//! Flat `key=value` experiment configuration.
//!
//! Recognised keys, with defaults:
//!
//! ```text
//! model.kind=ar1            ar1 | spatial | spacetime | random
//! model.dir                 model directory read by infer/sample/compare/bench
//! model.phi=0.95  model.n=99
//! model.nx=16  model.ny=16  model.spacing=1  model.kappa=0.5  model.tau=1  model.alpha=2
//! model.n_t=10  model.dt=1  model.gamma_t=1  model.gamma_s=0.5  model.gamma_e=1
//! model.tau_y=1  model.n_beta=0  model.seed=1
//! partition.J=2  partition.strategy  partition.l=10
//! estimator.name=overlapping_rbmc  estimator.K=10  estimator.seed=1
//! estimator.rtol=1e-8  estimator.maxit=1000  estimator.stop=cg_residual
//! estimator.cg_rtol=1e-10  estimator.cg_maxit=10000  estimator.precond=ic0
//! estimator.mode=sampled  estimator.p=2  estimator.base_size=500
//! estimator.interface_limit=2000  estimator.dense_cutoff=64  estimator.ordering=amd_like
//! replications=1  workers  out=gmrf-out  bench.workers=1,2,4,8
//! ```
//!
//! Space-time models take `γ` directly; the range/variance reparametrization
//! is not provided.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gmrf::estimators::{EstimatorSettings, PrecondKind, RbmcMode};
use gmrf::krylov::StopRule;
use gmrf::model::parse_kv;
use gmrf::sparse::Ordering;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Ar1,
    Spatial,
    SpaceTime,
    Random,
}

impl FromStr for ModelKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "ar1" => Ok(ModelKind::Ar1),
            "spatial" => Ok(ModelKind::Spatial),
            "spacetime" => Ok(ModelKind::SpaceTime),
            "random" => Ok(ModelKind::Random),
            other => Err(CliError::Usage(format!("unknown model.kind '{other}' (ar1, spatial, spacetime, random)"))),
        }
    }
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ar1 => "ar1",
            ModelKind::Spatial => "spatial",
            ModelKind::SpaceTime => "spacetime",
            ModelKind::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub dir: Option<PathBuf>,
    pub phi: f64,
    pub n: usize,
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
    pub kappa: f64,
    pub tau: f64,
    pub alpha: u32,
    pub n_t: usize,
    pub dt: f64,
    pub gamma_t: f64,
    pub gamma_s: f64,
    pub gamma_e: f64,
    pub tau_y: f64,
    pub n_beta: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionConfig {
    pub parts: usize,
    /// Defaults to `temporal_interval` when the model has a slab layout.
    pub strategy: Option<String>,
    pub l: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub partition: PartitionConfig,
    pub estimator: String,
    pub settings: EstimatorSettings,
    pub replications: usize,
    pub workers: Option<usize>,
    pub out: PathBuf,
    pub bench_workers: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelConfig {
                kind: ModelKind::Ar1,
                dir: None,
                phi: 0.95,
                n: 99,
                nx: 16,
                ny: 16,
                spacing: 1.0,
                kappa: 0.5,
                tau: 1.0,
                alpha: 2,
                n_t: 10,
                dt: 1.0,
                gamma_t: 1.0,
                gamma_s: 0.5,
                gamma_e: 1.0,
                tau_y: 1.0,
                n_beta: 0,
                seed: 1,
            },
            partition: PartitionConfig { parts: 2, strategy: None, l: 10 },
            estimator: "overlapping_rbmc".into(),
            settings: EstimatorSettings { k: 10, ..Default::default() },
            replications: 1,
            workers: None,
            out: PathBuf::from("gmrf-out"),
            bench_workers: vec![1, 2, 4, 8],
        }
    }
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::Usage(format!("bad value for {key}: '{v}'")))
}

fn core<T>(r: gmrf::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Usage(e.to_string()))
}

impl ExperimentConfig {
    /// Defaults, then the config file, then `--set` overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            map = core(parse_kv(&text, p))?;
        }
        let mut cfg = ExperimentConfig::default();
        for (k, v) in &map {
            cfg.set(k, v)?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got '{o}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        let m = &mut self.model;
        let s = &mut self.settings;
        match key {
            "model.kind" => m.kind = v.parse()?,
            "model.dir" => m.dir = Some(PathBuf::from(v)),
            "model.phi" => m.phi = value(key, v)?,
            "model.n" => m.n = value(key, v)?,
            "model.nx" => m.nx = value(key, v)?,
            "model.ny" => m.ny = value(key, v)?,
            "model.spacing" => m.spacing = value(key, v)?,
            "model.kappa" => m.kappa = value(key, v)?,
            "model.tau" => m.tau = value(key, v)?,
            "model.alpha" => m.alpha = value(key, v)?,
            "model.n_t" => m.n_t = value(key, v)?,
            "model.dt" => m.dt = value(key, v)?,
            "model.gamma_t" => m.gamma_t = value(key, v)?,
            "model.gamma_s" => m.gamma_s = value(key, v)?,
            "model.gamma_e" => m.gamma_e = value(key, v)?,
            "model.tau_y" => m.tau_y = value(key, v)?,
            "model.n_beta" => m.n_beta = value(key, v)?,
            "model.seed" => m.seed = value(key, v)?,
            "partition.J" => self.partition.parts = value(key, v)?,
            "partition.strategy" => self.partition.strategy = Some(v.to_string()),
            "partition.l" => self.partition.l = value(key, v)?,
            "estimator.name" => self.estimator = v.to_string(),
            "estimator.K" => s.k = value(key, v)?,
            "estimator.seed" => s.seed = value(key, v)?,
            "estimator.rtol" => s.lanczos.rtol = value(key, v)?,
            "estimator.maxit" => s.lanczos.maxit = value(key, v)?,
            "estimator.stop" => s.lanczos.stop = core(StopRule::parse(v))?,
            "estimator.cg_rtol" => s.cg_rtol = value(key, v)?,
            "estimator.cg_maxit" => s.cg_maxit = value(key, v)?,
            "estimator.precond" => s.precond = core(PrecondKind::parse(v))?,
            "estimator.mode" => s.mode = core(RbmcMode::parse(v))?,
            "estimator.p" => s.p = value(key, v)?,
            "estimator.base_size" => s.base_size = value(key, v)?,
            "estimator.interface_limit" => s.interface_limit = value(key, v)?,
            "estimator.dense_cutoff" => s.dense_cutoff = value(key, v)?,
            "estimator.ordering" => {
                s.ordering = Ordering::parse(v).ok_or_else(|| CliError::Usage(format!("unknown ordering '{v}'")))?
            }
            "replications" => self.replications = value(key, v)?,
            "workers" => self.workers = Some(value(key, v)?),
            "out" => self.out = PathBuf::from(v),
            "bench.workers" => {
                self.bench_workers = v.split(',').map(|w| value(key, w.trim())).collect::<Result<_, _>>()?
            }
            _ => return Err(CliError::Usage(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Usage(msg.to_string()));
        if self.partition.parts == 0 {
            return bad("partition.J must be at least 1");
        }
        if self.replications == 0 {
            return bad("replications must be at least 1");
        }
        if self.workers == Some(0) || self.bench_workers.contains(&0) {
            return bad("worker counts must be at least 1");
        }
        if self.bench_workers.is_empty() {
            return bad("bench.workers must list at least one worker count");
        }
        if !(self.model.tau_y >= 0.0) {
            return bad("model.tau_y must be nonnegative");
        }
        Ok(())
    }

    /// Model parameters recorded in `meta.kv` by `build`.
    pub fn model_meta(&self) -> BTreeMap<String, String> {
        let m = &self.model;
        let mut out = BTreeMap::new();
        out.insert("kind".into(), m.kind.name().into());
        out.insert("seed".into(), m.seed.to_string());
        let mut put = |k: &str, v: String| {
            out.insert(k.to_string(), v);
        };
        match m.kind {
            ModelKind::Ar1 => {
                put("phi", m.phi.to_string());
            }
            ModelKind::Spatial => {
                put("nx", m.nx.to_string());
                put("ny", m.ny.to_string());
                put("spacing", m.spacing.to_string());
                put("kappa", m.kappa.to_string());
                put("tau", m.tau.to_string());
                put("alpha", m.alpha.to_string());
            }
            ModelKind::SpaceTime => {
                put("nx", m.nx.to_string());
                put("ny", m.ny.to_string());
                put("spacing", m.spacing.to_string());
                put("dt", m.dt.to_string());
                put("gamma_t", m.gamma_t.to_string());
                put("gamma_s", m.gamma_s.to_string());
                put("gamma_e", m.gamma_e.to_string());
            }
            ModelKind::Random => {}
        }
        out
    }
}
