//! TOML run configuration. Every field can be overridden by a flag.

use std::fs;
use std::path::{Path, PathBuf};

use curveroute::data::DatasetPaths;
use curveroute::eval::{Method, DEFAULT_LAMBDA_POINTS};
use curveroute::predictors::TrainConfig;
use curveroute::router::{RoutingMode, RoutingPolicy};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding pool.json, grid.json, queries.jsonl and samples.jsonl.
    pub dir: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub samples: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub lambda: f64,
    pub budget_limit: u32,
    pub mode: RoutingMode,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            budget_limit: 4000,
            mode: RoutingMode::ContinuousCurve,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub lambda_points: usize,
    pub seeds: Vec<u64>,
    /// Empty means every method.
    pub methods: Vec<Method>,
    pub out_dir: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            lambda_points: DEFAULT_LAMBDA_POINTS,
            seeds: vec![0],
            methods: Vec::new(),
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u32,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    pub checkpoint: Option<PathBuf>,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub policy: PolicyConfig,
    pub eval: EvalConfig,
    pub service: ServiceConfig,
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl AppConfig {
    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| input(format!("config not found: {}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| input(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.checkpoint,
            &mut cfg.data.dir,
            &mut cfg.data.pool,
            &mut cfg.data.grid,
            &mut cfg.data.queries,
            &mut cfg.data.samples,
            &mut cfg.eval.out_dir,
        ] {
            rebase(base, p);
        }
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn policy(&self) -> RoutingPolicy {
        RoutingPolicy::new(self.policy.lambda, self.policy.budget_limit, self.policy.mode)
    }

    pub fn methods(&self) -> Vec<Method> {
        if self.eval.methods.is_empty() {
            Method::ALL.to_vec()
        } else {
            self.eval.methods.clone()
        }
    }

    /// Dataset file locations; each must exist.
    pub fn dataset_paths(&self) -> Result<DatasetPaths, CliError> {
        let d = &self.data;
        let from_dir = d.dir.as_ref().map(DatasetPaths::in_dir);
        let pick = |own: &Option<PathBuf>, dir: Option<&PathBuf>, name: &str| {
            own.clone()
                .or_else(|| dir.cloned())
                .ok_or_else(|| input(format!("no dataset {name} path; set data.dir or data.{name}")))
        };
        let paths = DatasetPaths {
            pool: pick(&d.pool, from_dir.as_ref().map(|p| &p.pool), "pool")?,
            grid: pick(&d.grid, from_dir.as_ref().map(|p| &p.grid), "grid")?,
            queries: pick(&d.queries, from_dir.as_ref().map(|p| &p.queries), "queries")?,
            samples: pick(&d.samples, from_dir.as_ref().map(|p| &p.samples), "samples")?,
        };
        for p in [&paths.pool, &paths.grid, &paths.queries, &paths.samples] {
            require_file(p)?;
        }
        Ok(paths)
    }

    pub fn checkpoint_path(&self) -> Result<&Path, CliError> {
        self.checkpoint
            .as_deref()
            .ok_or_else(|| input("no checkpoint path; pass --checkpoint or set checkpoint"))
    }

    pub fn service_addr(&self) -> Result<(String, u16), CliError> {
        let port = u16::try_from(self.service.port)
            .ok()
            .filter(|&p| p != 0)
            .ok_or_else(|| input(format!("port {} is outside [1, 65535]", self.service.port)))?;
        Ok((self.service.bind.clone(), port))
    }
}

pub fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(input(format!("file not found: {}", path.display())))
    }
}
