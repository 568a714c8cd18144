//! Deferral-curve evaluation: lambda sweeps, oracles, AUDC, QNC,
//! compliance rates, anchor ablation and seed replication.

mod report;

use std::cmp::Ordering;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::data::{DataError, Dataset, Level, ResponseSample};
use crate::predictors::{PredictorError, QualityPredictor, RouterModel};
use crate::pricing::query_cost;
use crate::router::{cost_scale, score, Forecast, ReactiveAnchors, RouteError, RoutingDecision, RoutingMode, RoutingPolicy};

pub use report::{
    evaluate, replicate, write_report, ComplianceRow, EvalReport, Method, MetricStats, ReplicateSummary,
};

pub const DEFAULT_LAMBDA_POINTS: usize = 64;
pub const DEFAULT_COMPLIANCE_RATIO: f64 = 1.1;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("lambda grid must be a nonempty subset of [0, 1]")]
    LambdaGrid,
    #[error("no sample for ({query_id}, {model_id}, {level}) in the evaluation set")]
    MissingOutcome {
        query_id: String,
        model_id: String,
        level: Level,
    },
    #[error("best single model has zero mean cost; QNC is undefined")]
    ZeroBestCost,
    #[error("evaluation set has no queries")]
    Empty,
    #[error("invalid ablation: {0}")]
    Ablation(String),
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// `n` evenly spaced values from 0 to 1 inclusive.
pub fn lambda_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

fn check_lambdas(grid: &[f64]) -> Result<(), EvalError> {
    if grid.is_empty() || grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(EvalError::LambdaGrid);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeferralPoint {
    pub lambda: f64,
    pub mean_quality: f64,
    pub total_cost: f64,
    pub mean_cost: f64,
}

/// Query-normalized cost, or `"unreached"` when no point matches the best
/// single model's quality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Qnc {
    Reached(f64),
    Unreached,
}

impl Qnc {
    /// Unreached counts as infinitely expensive.
    pub fn value(self) -> f64 {
        match self {
            Self::Reached(v) => v,
            Self::Unreached => f64::INFINITY,
        }
    }
}

impl Serialize for Qnc {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Reached(v) => s.serialize_f64(*v),
            Self::Unreached => s.serialize_str("unreached"),
        }
    }
}

impl<'de> Deserialize<'de> for Qnc {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Self::Reached(v)),
            Raw::Tag(t) if t == "unreached" => Ok(Self::Unreached),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!("bad qnc {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSingle {
    pub model_id: String,
    pub quality: f64,
    pub mean_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeferralCurve {
    /// Sorted by mean cost, then mean quality.
    pub points: Vec<DeferralPoint>,
    pub audc: f64,
    pub cost_axis_max: f64,
    pub qnc: Qnc,
    pub peak_quality: f64,
    /// Fewer than two points; AUDC is the single point's quality.
    pub degenerate: bool,
}

impl DeferralCurve {
    /// Sorts `points` and computes every metric; the cost axis is the
    /// curve's own largest mean cost.
    pub fn new(mut points: Vec<DeferralPoint>, best: &BestSingle) -> Result<Self, EvalError> {
        if points.is_empty() {
            return Err(EvalError::Empty);
        }
        points.sort_by(|a, b| {
            a.mean_cost
                .total_cmp(&b.mean_cost)
                .then(a.mean_quality.total_cmp(&b.mean_quality))
        });
        let cost_axis_max = points.iter().map(|p| p.mean_cost).fold(0.0, f64::max);
        Ok(Self {
            audc: audc(&points, cost_axis_max),
            cost_axis_max,
            qnc: qnc(&points, best)?,
            peak_quality: points.iter().map(|p| p.mean_quality).fold(0.0, f64::max),
            degenerate: points.len() < 2,
            points,
        })
    }

    /// Recomputes AUDC on a shared cost axis.
    pub fn with_cost_axis(mut self, cost_axis_max: f64) -> Self {
        self.audc = audc(&self.points, cost_axis_max);
        self.cost_axis_max = cost_axis_max;
        self
    }
}

/// Area under the piecewise-linear curve through `points` (sorted by cost),
/// extended flat from cost 0 to the first point and from the last point to
/// `cost_axis_max`, divided by `cost_axis_max`.
pub fn audc(points: &[DeferralPoint], cost_axis_max: f64) -> f64 {
    let (Some(first), Some(last)) = (points.first(), points.last()) else {
        return 0.0;
    };
    if cost_axis_max <= 0.0 {
        return last.mean_quality;
    }
    let mut area = first.mean_quality * first.mean_cost;
    for w in points.windows(2) {
        area += 0.5 * (w[0].mean_quality + w[1].mean_quality) * (w[1].mean_cost - w[0].mean_cost);
    }
    area += last.mean_quality * (cost_axis_max - last.mean_cost).max(0.0);
    area / cost_axis_max
}

pub fn qnc(points: &[DeferralPoint], best: &BestSingle) -> Result<Qnc, EvalError> {
    if best.mean_cost == 0.0 {
        return Err(EvalError::ZeroBestCost);
    }
    Ok(points
        .iter()
        .filter(|p| p.mean_quality >= best.quality)
        .map(|p| p.mean_cost / best.mean_cost)
        .reduce(f64::min)
        .map_or(Qnc::Unreached, Qnc::Reached))
}

fn realized_cost(d: &Dataset, model: usize, s: &ResponseSample) -> f64 {
    query_cost(&d.pool()[model], s.input_tokens, s.actual_output_tokens)
}

/// The model with the highest mean default-level quality (ties: lower mean
/// cost), with its realized mean cost.
pub fn best_single(test: &Dataset) -> Result<BestSingle, EvalError> {
    let n = test.queries().len();
    if n == 0 {
        return Err(EvalError::Empty);
    }
    let level = test.grid().default_level();
    let li = test.level_index(level).expect("default level is part of the grid");
    let mut best: Option<BestSingle> = None;
    for (mi, m) in test.pool().iter().enumerate() {
        let (mut q, mut c) = (0.0, 0.0);
        for qi in 0..n {
            let s = outcome_at(test, qi, mi, li)?;
            q += s.quality;
            c += realized_cost(test, mi, s);
        }
        let cand = BestSingle {
            model_id: m.model_id.clone(),
            quality: q / n as f64,
            mean_cost: c / n as f64,
        };
        let better = match &best {
            None => true,
            Some(b) => cand.quality > b.quality || (cand.quality == b.quality && cand.mean_cost < b.mean_cost),
        };
        if better {
            best = Some(cand);
        }
    }
    best.ok_or(EvalError::Empty)
}

fn outcome_at(test: &Dataset, qi: usize, mi: usize, li: usize) -> Result<&ResponseSample, EvalError> {
    test.sample_at(qi, mi, li).ok_or_else(|| EvalError::MissingOutcome {
        query_id: test.queries()[qi].query_id.clone(),
        model_id: test.pool()[mi].model_id.clone(),
        level: test.levels()[li],
    })
}

/// Level whose recorded sample stands in for a decided budget. Exact grid
/// levels map to themselves; budgets between curve levels snap up to the
/// next one, budgets past the last curve level snap down to it.
pub fn lookup_level(test: &Dataset, decided: Level) -> Level {
    if test.grid().contains(decided) {
        return decided;
    }
    let curve = test.grid().curve_levels();
    curve
        .iter()
        .copied()
        .find(|l| l.budget >= decided.budget)
        .unwrap_or_else(|| *curve.last().expect("grid has anchors"))
}

fn outcome_for<'d>(test: &'d Dataset, qi: usize, d: &RoutingDecision) -> Result<(usize, &'d ResponseSample), EvalError> {
    let level = lookup_level(test, d.level());
    let missing = || EvalError::MissingOutcome {
        query_id: test.queries()[qi].query_id.clone(),
        model_id: d.model_id.clone(),
        level,
    };
    let mi = test.model_index(&d.model_id).ok_or_else(missing)?;
    let li = test.level_index(level).ok_or_else(missing)?;
    Ok((mi, test.sample_at(qi, mi, li).ok_or_else(missing)?))
}

/// Decisions for every (lambda, query), `[lambda][query]`.
pub fn sweep_decisions<P: QualityPredictor + ?Sized>(
    p: &P,
    test: &Dataset,
    template: &RoutingPolicy,
    anchors: &ReactiveAnchors,
    lambdas: &[f64],
) -> Result<Vec<Vec<RoutingDecision>>, EvalError> {
    check_lambdas(lambdas)?;
    let mut out = vec![Vec::with_capacity(test.queries().len()); lambdas.len()];
    for (qi, q) in test.queries().iter().enumerate() {
        let f = Forecast::new(p, q)?;
        let base = RoutingPolicy {
            input_tokens: test.input_tokens(qi),
            ..*template
        };
        for (li, &lambda) in lambdas.iter().enumerate() {
            out[li].push(f.decide(&base.with_lambda(lambda), anchors)?);
        }
    }
    Ok(out)
}

fn aggregate(lambda: f64, outcomes: impl Iterator<Item = (f64, f64)>) -> DeferralPoint {
    let (mut q, mut c, mut n) = (0.0, 0.0, 0usize);
    for (quality, cost) in outcomes {
        q += quality;
        c += cost;
        n += 1;
    }
    DeferralPoint {
        lambda,
        mean_quality: q / n as f64,
        total_cost: c,
        mean_cost: c / n as f64,
    }
}

/// Routes every test query at each lambda and scores the realized outcomes.
pub fn sweep<P: QualityPredictor + ?Sized>(
    p: &P,
    test: &Dataset,
    template: &RoutingPolicy,
    anchors: &ReactiveAnchors,
    lambdas: &[f64],
) -> Result<DeferralCurve, EvalError> {
    if test.queries().is_empty() {
        return Err(EvalError::Empty);
    }
    let decisions = sweep_decisions(p, test, template, anchors, lambdas)?;
    let mut points = Vec::with_capacity(lambdas.len());
    for (&lambda, row) in lambdas.iter().zip(&decisions) {
        let outcomes = row
            .iter()
            .enumerate()
            .map(|(qi, d)| {
                let (mi, s) = outcome_for(test, qi, d)?;
                Ok((s.quality, realized_cost(test, mi, s)))
            })
            .collect::<Result<Vec<_>, EvalError>>()?;
        points.push(aggregate(lambda, outcomes.into_iter()));
    }
    DeferralCurve::new(points, &best_single(test)?)
}

fn oracle(test: &Dataset, lambdas: &[f64], levels: &[Level]) -> Result<DeferralCurve, EvalError> {
    check_lambdas(lambdas)?;
    let n = test.queries().len();
    if n == 0 {
        return Err(EvalError::Empty);
    }
    let scale = cost_scale(test.pool(), test.grid());
    // Realized (quality, cost, model, level) per query.
    let mut table = Vec::with_capacity(n);
    for qi in 0..n {
        let mut row = Vec::new();
        for mi in 0..test.pool().len() {
            for &level in levels {
                let li = test.level_index(level).expect("oracle levels come from the grid");
                let s = outcome_at(test, qi, mi, li)?;
                row.push((s.quality, realized_cost(test, mi, s), mi, level));
            }
        }
        table.push(row);
    }
    let pool = test.pool();
    let mut points = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let chosen = table.iter().map(|row| {
            let best = row
                .iter()
                .copied()
                .reduce(|best, c| {
                    let (sb, sc) = (score(best.0, best.1, lambda, scale), score(c.0, c.1, lambda, scale));
                    let ord = sc
                        .total_cmp(&sb)
                        .then_with(|| best.1.total_cmp(&c.1))
                        .then_with(|| pool[best.2].model_id.cmp(&pool[c.2].model_id))
                        .then_with(|| best.3.cmp(&c.3));
                    if ord == Ordering::Greater {
                        c
                    } else {
                        best
                    }
                })
                .expect("pool and levels are nonempty");
            (best.0, best.1)
        });
        points.push(aggregate(lambda, chosen));
    }
    DeferralCurve::new(points, &best_single(test)?)
}

/// Per query, the realized-score argmax over models at the default level.
pub fn oracle_point(test: &Dataset, lambdas: &[f64]) -> Result<DeferralCurve, EvalError> {
    oracle(test, lambdas, &[test.grid().default_level()])
}

/// Per query, the realized-score argmax over every (model, level).
pub fn oracle_curve(test: &Dataset, lambdas: &[f64]) -> Result<DeferralCurve, EvalError> {
    oracle(test, lambdas, &test.grid().levels())
}

/// Fraction of samples per (model, anchor) whose output length is within
/// `threshold_ratio` times the budget. Default-level cells are skipped.
pub fn compliance_table(d: &Dataset, threshold_ratio: f64) -> Vec<ComplianceRow> {
    let mut rows = Vec::new();
    for (mi, m) in d.pool().iter().enumerate() {
        for (li, level) in d.levels().iter().enumerate() {
            if level.is_default {
                continue;
            }
            let limit = threshold_ratio * f64::from(level.budget);
            let (mut ok, mut n) = (0usize, 0usize);
            for qi in 0..d.queries().len() {
                if let Some(s) = d.sample_at(qi, mi, li) {
                    n += 1;
                    if s.actual_output_tokens as f64 <= limit {
                        ok += 1;
                    }
                }
            }
            if n > 0 {
                rows.push(ComplianceRow {
                    model_id: m.model_id.clone(),
                    budget: level.budget,
                    rate: ok as f64 / n as f64,
                    n_samples: n,
                });
            }
        }
    }
    rows
}

/// `k` anchors spaced geometrically between the smallest and largest
/// anchor; each target takes the nearest unused anchor in log space.
/// `k = 1` keeps the largest anchor.
pub fn select_anchors(anchors: &[u32], k: usize) -> Result<Vec<u32>, EvalError> {
    let n = anchors.len();
    if k == 0 || k > n {
        return Err(EvalError::Ablation(format!("K = {k} with {n} anchors")));
    }
    if k == 1 {
        return Ok(vec![anchors[n - 1]]);
    }
    let (lo, hi) = (f64::from(anchors[0]).ln(), f64::from(anchors[n - 1]).ln());
    let mut used = vec![false; n];
    used[0] = true;
    used[n - 1] = true;
    for i in 1..k - 1 {
        let target = lo + (hi - lo) * i as f64 / (k - 1) as f64;
        let pick = (0..n)
            .filter(|&j| !used[j])
            .min_by(|&a, &b| {
                let da = (f64::from(anchors[a]).ln() - target).abs();
                let db = (f64::from(anchors[b]).ln() - target).abs();
                da.total_cmp(&db)
            })
            .expect("k <= n leaves an unused anchor");
        used[pick] = true;
    }
    Ok((0..n).filter(|&j| used[j]).map(|j| anchors[j]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub k: usize,
    pub anchors: Vec<u32>,
    pub audc: f64,
    pub qnc: Qnc,
}

/// Continuous-mode metrics of `model` restricted to `k` anchors, for each
/// `k`. Heads are trained per cell with cell-keyed randomness, so the
/// restriction is the model that training on the smaller grid would give.
/// AUDC shares one cost axis across all `k`.
pub fn anchor_ablation(
    model: &RouterModel,
    test: &Dataset,
    k_values: &[usize],
    template: &RoutingPolicy,
    lambdas: &[f64],
) -> Result<Vec<AblationRow>, EvalError> {
    let policy = RoutingPolicy {
        mode: RoutingMode::ContinuousCurve,
        ..*template
    };
    let all = &model.grid().anchors;
    let mut curves = Vec::with_capacity(k_values.len());
    for &k in k_values {
        if k < 2 {
            return Err(EvalError::Ablation(format!("continuous routing needs K >= 2, got {k}")));
        }
        let anchors = select_anchors(all, k)?;
        let restricted = model.restrict_anchors(&anchors)?;
        curves.push((k, anchors, sweep(&restricted, test, &policy, &ReactiveAnchors::default(), lambdas)?));
    }
    let axis = curves.iter().map(|c| c.2.cost_axis_max).fold(0.0, f64::max);
    Ok(curves
        .into_iter()
        .map(|(k, anchors, c)| {
            let c = c.with_cost_axis(axis);
            AblationRow {
                k,
                anchors,
                audc: c.audc,
                qnc: c.qnc,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests;
