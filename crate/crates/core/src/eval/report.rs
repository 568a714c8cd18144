use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    best_single, compliance_table, oracle_curve, oracle_point, sweep, BestSingle, DeferralCurve, EvalError,
    DEFAULT_COMPLIANCE_RATIO,
};
use crate::data::Dataset;
use crate::predictors::QualityPredictor;
use crate::router::{ReactiveAnchors, RoutingMode, RoutingPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Continuous routing over the interpolated curves.
    Curve,
    Discrete,
    Reactive,
    OraclePoint,
    OracleCurve,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Curve,
        Method::Discrete,
        Method::Reactive,
        Method::OraclePoint,
        Method::OracleCurve,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Curve => "curve",
            Self::Discrete => "discrete",
            Self::Reactive => "reactive",
            Self::OraclePoint => "oracle_point",
            Self::OracleCurve => "oracle_curve",
        }
    }

    fn routing_mode(self) -> Option<RoutingMode> {
        match self {
            Self::Curve => Some(RoutingMode::ContinuousCurve),
            Self::Discrete => Some(RoutingMode::DiscreteCurve),
            Self::Reactive => Some(RoutingMode::Reactive),
            Self::OraclePoint | Self::OracleCurve => None,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceRow {
    pub model_id: String,
    pub budget: u32,
    pub rate: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    /// Sample standard deviation (n - 1); 0 for a single replicate.
    pub sd: f64,
    pub values: Vec<f64>,
}

impl MetricStats {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() < 2 {
            0.0
        } else if !mean.is_finite() {
            f64::INFINITY
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, sd, values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub seeds: Vec<u64>,
    pub single_replicate: bool,
    pub metrics: BTreeMap<String, MetricStats>,
}

/// Runs `run` once per seed and aggregates every metric it reports. A
/// metric missing from some run is aggregated over the runs that have it.
pub fn replicate<E: From<EvalError>>(
    seeds: &[u64],
    mut run: impl FnMut(u64) -> Result<BTreeMap<String, f64>, E>,
) -> Result<ReplicateSummary, E> {
    if seeds.is_empty() {
        return Err(EvalError::Empty.into());
    }
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for &seed in seeds {
        for (k, v) in run(seed)? {
            values.entry(k).or_default().push(v);
        }
    }
    Ok(ReplicateSummary {
        seeds: seeds.to_vec(),
        single_replicate: seeds.len() == 1,
        metrics: values
            .into_iter()
            .map(|(k, v)| (k, MetricStats::from_values(v)))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub lambda_grid: Vec<f64>,
    pub policy: RoutingPolicy,
    /// Shared AUDC cost axis: the largest mean cost of any method.
    pub cost_axis_max: f64,
    pub best_single: BestSingle,
    pub curves: BTreeMap<String, DeferralCurve>,
    pub replicates: ReplicateSummary,
    pub compliance: Vec<ComplianceRow>,
}

impl EvalReport {
    /// `method.audc`, `method.qnc` (unreached as infinity) and
    /// `method.peak_quality` for every curve.
    pub fn metrics(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for (name, c) in &self.curves {
            out.insert(format!("{name}.audc"), c.audc);
            out.insert(format!("{name}.qnc"), c.qnc.value());
            out.insert(format!("{name}.peak_quality"), c.peak_quality);
        }
        out
    }
}

/// Evaluates each method on `test`, puts every AUDC on a common cost axis
/// and records the run as a single replicate under `seed`.
pub fn evaluate<P: QualityPredictor + ?Sized>(
    p: &P,
    test: &Dataset,
    methods: &[Method],
    template: &RoutingPolicy,
    anchors: &ReactiveAnchors,
    lambdas: &[f64],
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let mut curves = BTreeMap::new();
    for &m in methods {
        let curve = match m.routing_mode() {
            Some(mode) => sweep(p, test, &RoutingPolicy { mode, ..*template }, anchors, lambdas)?,
            None if m == Method::OraclePoint => oracle_point(test, lambdas)?,
            None => oracle_curve(test, lambdas)?,
        };
        curves.insert(m.name().to_string(), curve);
    }
    let cost_axis_max = curves.values().map(|c| c.cost_axis_max).fold(0.0, f64::max);
    let curves: BTreeMap<String, DeferralCurve> = curves
        .into_iter()
        .map(|(k, c)| (k, c.with_cost_axis(cost_axis_max)))
        .collect();
    let mut report = EvalReport {
        lambda_grid: lambdas.to_vec(),
        policy: *template,
        cost_axis_max,
        best_single: best_single(test)?,
        curves,
        replicates: ReplicateSummary {
            seeds: Vec::new(),
            single_replicate: true,
            metrics: BTreeMap::new(),
        },
        compliance: compliance_table(test, DEFAULT_COMPLIANCE_RATIO),
    };
    let metrics = report.metrics();
    report.replicates = replicate::<EvalError>(&[seed], |_| Ok(metrics.clone()))?;
    Ok(report)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_io = |e: csv::Error| EvalError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    };
    w.write_record(header).map_err(to_io)?;
    for row in rows {
        w.write_record(&row).map_err(to_io)?;
    }
    let bytes = w.into_inner().map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    })?;
    fs::write(path, bytes).map_err(io_err(path))
}

/// Writes `report.json`, one `curve_<method>.csv` per method (rows in
/// lambda order) and `compliance.csv` into `dir`.
pub fn write_report(report: &EvalReport, dir: impl AsRef<Path>) -> Result<(), EvalError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("report.json");
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    fs::write(&path, json).map_err(io_err(&path))?;

    for (name, curve) in &report.curves {
        let mut points: Vec<_> = curve.points.iter().collect();
        points.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
        write_csv(
            &dir.join(format!("curve_{name}.csv")),
            &["lambda", "mean_cost_usd", "mean_quality"],
            points
                .into_iter()
                .map(|p| vec![p.lambda.to_string(), p.mean_cost.to_string(), p.mean_quality.to_string()]),
        )?;
    }
    write_csv(
        &dir.join("compliance.csv"),
        &["model_id", "budget", "rate"],
        report
            .compliance
            .iter()
            .map(|r| vec![r.model_id.clone(), r.budget.to_string(), r.rate.to_string()]),
    )
}
