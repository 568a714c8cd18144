//! Routing decisions over (model, budget) pairs.
//!
//! Every argmax here uses the same ordering: higher score, then lower
//! predicted cost, then smaller model id, then smaller budget, then an
//! explicit anchor before the default level.

mod signature;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{BudgetGrid, Level, ModelSpec, Query};
use crate::predictors::{PredictorError, QualityPredictor};
use crate::pricing::{output_cost, query_cost};

pub use signature::{build_signature, route_unseen, ModelSignature, UnseenPool, DEFAULT_TEMPERATURE};

#[derive(Debug, Error)]
pub enum RouteError {
    #[error("no feasible budget: budget_limit {budget_limit} is below every candidate level")]
    NoFeasibleBudget { budget_limit: u32 },
    #[error("invalid policy: {0}")]
    Policy(String),
    #[error("at least one trained model signature is required")]
    EmptySignatures,
    #[error("missing validation coverage for {model_id} at budget {level}")]
    Coverage { model_id: String, level: Level },
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingMode {
    Reactive,
    #[serde(alias = "discrete")]
    DiscreteCurve,
    #[serde(alias = "continuous")]
    ContinuousCurve,
}

impl std::str::FromStr for RoutingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reactive" => Ok(Self::Reactive),
            "discrete_curve" | "discrete" => Ok(Self::DiscreteCurve),
            "continuous_curve" | "continuous" => Ok(Self::ContinuousCurve),
            other => Err(format!("unknown routing mode {other:?}")),
        }
    }
}

impl std::fmt::Display for RoutingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Reactive => "reactive",
            Self::DiscreteCurve => "discrete_curve",
            Self::ContinuousCurve => "continuous_curve",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingPolicy {
    pub lambda: f64,
    pub budget_limit: u32,
    pub mode: RoutingMode,
    /// Prompt length used for the input part of the predicted cost.
    #[serde(default)]
    pub input_tokens: u64,
}

impl RoutingPolicy {
    pub fn new(lambda: f64, budget_limit: u32, mode: RoutingMode) -> Self {
        Self {
            lambda,
            budget_limit,
            mode,
            input_tokens: 0,
        }
    }

    pub fn validate(&self) -> Result<(), RouteError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(RouteError::Policy(format!("lambda {} is outside [0, 1]", self.lambda)));
        }
        if self.budget_limit == 0 {
            return Err(RouteError::Policy("budget_limit must be positive".into()));
        }
        Ok(())
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }
}

/// `(1 - lambda) * quality - lambda * cost / cost_scale`.
pub fn score(quality: f64, cost: f64, lambda: f64, cost_scale: f64) -> f64 {
    (1.0 - lambda) * quality - lambda * (cost / cost_scale)
}

/// Largest output cost over every (model, level) of the grid; 1 when all
/// models are free.
pub fn cost_scale(pool: &[ModelSpec], grid: &BudgetGrid) -> f64 {
    let levels = grid.levels();
    let max = pool
        .iter()
        .flat_map(|m| levels.iter().map(move |l| output_cost(m, u64::from(l.budget))))
        .fold(0.0, f64::max);
    if max > 0.0 {
        max
    } else {
        1.0
    }
}

/// The fixed level each model answers at under reactive routing. Models
/// without an entry use the grid's default level.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReactiveAnchors(pub BTreeMap<String, Level>);

impl ReactiveAnchors {
    pub fn level_for(&self, model_id: &str, grid: &BudgetGrid) -> Level {
        self.0.get(model_id).copied().unwrap_or_else(|| grid.default_level())
    }

    pub fn set(&mut self, model_id: impl Into<String>, level: Level) {
        self.0.insert(model_id.into(), level);
    }
}

/// One model's fixed operating point under reactive routing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactivePoint {
    pub model_id: String,
    pub predicted_cost: f64,
    pub predicted_quality: f64,
    pub anchor_used: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub query_id: String,
    pub model_id: String,
    pub budget: u32,
    pub predicted_quality: f64,
    pub predicted_cost_usd: f64,
    pub score: f64,
    pub instruction: String,
    /// Whether the decision points at the default-level head.
    #[serde(skip)]
    pub is_default: bool,
}

impl RoutingDecision {
    pub fn level(&self) -> Level {
        Level {
            budget: self.budget,
            is_default: self.is_default,
        }
    }
}

pub fn instruction(budget: u32) -> String {
    format!("Use at most {budget} tokens.")
}

/// A scored candidate. `level` of an interpolated point is an anchor-flagged
/// level at that budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub model: usize,
    pub level: Level,
    pub quality: f64,
    pub cost: f64,
    pub score: f64,
}

/// Total order used by every argmax: `Greater` means `a` wins.
pub fn compare_candidates(pool: &[ModelSpec], a: &Candidate, b: &Candidate) -> Ordering {
    a.score
        .total_cmp(&b.score)
        .then_with(|| b.cost.total_cmp(&a.cost))
        .then_with(|| pool[b.model].model_id.cmp(&pool[a.model].model_id))
        .then_with(|| b.level.cmp(&a.level))
}

fn best_of(pool: &[ModelSpec], candidates: impl IntoIterator<Item = Candidate>) -> Option<Candidate> {
    candidates
        .into_iter()
        .reduce(|best, c| match compare_candidates(pool, &c, &best) {
            Ordering::Greater => c,
            _ => best,
        })
}

/// Piecewise-linear quality through `(0, 0)` and the given `(budget, quality)`
/// points (sorted by budget), held constant past the last point.
pub fn interpolate(points: &[(u32, f64)], b: f64) -> f64 {
    let Some(&(b1, q1)) = points.first() else {
        return 0.0;
    };
    if b <= 0.0 {
        return 0.0;
    }
    if b < f64::from(b1) {
        return q1 * (b / f64::from(b1));
    }
    for w in points.windows(2) {
        let ((lo, q_lo), (hi, q_hi)) = (w[0], w[1]);
        if b == f64::from(lo) {
            return q_lo;
        }
        if b < f64::from(hi) {
            let alpha = (b - f64::from(lo)) / f64::from(hi - lo);
            return (1.0 - alpha) * q_lo + alpha * q_hi;
        }
    }
    points.last().unwrap().1
}

/// Predicted quality of every (model, level) for one query, so several
/// policies can be evaluated without re-running the predictor.
#[derive(Debug, Clone)]
pub struct Forecast<'a> {
    pool: &'a [ModelSpec],
    grid: &'a BudgetGrid,
    query_id: String,
    levels: Vec<Level>,
    curve: Vec<usize>,
    // [model][level]
    quality: Vec<f64>,
    cost_scale: f64,
}

impl<'a> Forecast<'a> {
    pub fn new<P: QualityPredictor + ?Sized>(p: &'a P, q: &Query) -> Result<Self, RouteError> {
        p.check_dim(&q.embedding)?;
        let levels = p.grid().levels();
        let mut quality = Vec::with_capacity(p.pool().len() * levels.len());
        for m in 0..p.pool().len() {
            for &l in &levels {
                quality.push(p.predict(&q.embedding, m, l)?);
            }
        }
        Ok(Self::from_table(p.pool(), p.grid(), &q.query_id, quality))
    }

    /// Builds a forecast from qualities laid out `[model][level]` in
    /// `grid.levels()` order.
    pub fn from_table(pool: &'a [ModelSpec], grid: &'a BudgetGrid, query_id: &str, quality: Vec<f64>) -> Self {
        let levels = grid.levels();
        assert_eq!(quality.len(), pool.len() * levels.len(), "one quality per (model, level)");
        let curve_levels = grid.curve_levels();
        let curve = levels
            .iter()
            .enumerate()
            .filter(|(_, l)| curve_levels.contains(l))
            .map(|(i, _)| i)
            .collect();
        Self {
            pool,
            grid,
            query_id: query_id.to_string(),
            levels,
            curve,
            quality,
            cost_scale: cost_scale(pool, grid),
        }
    }

    pub fn pool(&self) -> &[ModelSpec] {
        self.pool
    }

    pub fn cost_scale(&self) -> f64 {
        self.cost_scale
    }

    pub fn quality(&self, model: usize, level: Level) -> Option<f64> {
        let li = self.levels.binary_search(&level).ok()?;
        self.quality.get(model * self.levels.len() + li).copied()
    }

    /// `(budget, quality)` points of one model's curve.
    pub fn curve_points(&self, model: usize) -> Vec<(u32, f64)> {
        let base = model * self.levels.len();
        self.curve
            .iter()
            .map(|&li| (self.levels[li].budget, self.quality[base + li]))
            .collect()
    }

    pub fn interpolate(&self, model: usize, b: f64) -> f64 {
        interpolate(&self.curve_points(model), b)
    }

    fn candidate(&self, policy: &RoutingPolicy, model: usize, level: Level, quality: f64) -> Candidate {
        let cost = query_cost(&self.pool[model], policy.input_tokens, u64::from(level.budget));
        Candidate {
            model,
            level,
            quality,
            cost,
            score: score(quality, cost, policy.lambda, self.cost_scale),
        }
    }

    /// Candidates searched by `policy.mode`, before the argmax.
    pub fn candidates(&self, policy: &RoutingPolicy, anchors: &ReactiveAnchors) -> Result<Vec<Candidate>, RouteError> {
        let mut out = Vec::new();
        match policy.mode {
            RoutingMode::Reactive => {
                for (m, spec) in self.pool.iter().enumerate() {
                    let level = anchors.level_for(&spec.model_id, self.grid);
                    let q = self.quality(m, level).ok_or_else(|| PredictorError::UnknownCell {
                        model_id: spec.model_id.clone(),
                        level,
                    })?;
                    if level.budget <= policy.budget_limit {
                        out.push(self.candidate(policy, m, level, q));
                    }
                }
            }
            RoutingMode::DiscreteCurve => self.discrete_candidates(policy, &mut out),
            RoutingMode::ContinuousCurve => {
                self.discrete_candidates(policy, &mut out);
                for m in 0..self.pool.len() {
                    let points = self.curve_points(m);
                    out.push(self.candidate(policy, m, Level::anchor(0), 0.0));
                    if !points.iter().any(|&(b, _)| b == policy.budget_limit) {
                        let q = interpolate(&points, f64::from(policy.budget_limit));
                        out.push(self.candidate(policy, m, Level::anchor(policy.budget_limit), q));
                    }
                }
            }
        }
        Ok(out)
    }

    fn discrete_candidates(&self, policy: &RoutingPolicy, out: &mut Vec<Candidate>) {
        for m in 0..self.pool.len() {
            for (li, &level) in self.levels.iter().enumerate() {
                if level.budget <= policy.budget_limit {
                    out.push(self.candidate(policy, m, level, self.quality[m * self.levels.len() + li]));
                }
            }
        }
    }

    pub fn decide(&self, policy: &RoutingPolicy, anchors: &ReactiveAnchors) -> Result<RoutingDecision, RouteError> {
        policy.validate()?;
        let best = best_of(self.pool, self.candidates(policy, anchors)?).ok_or(RouteError::NoFeasibleBudget {
            budget_limit: policy.budget_limit,
        })?;
        Ok(RoutingDecision {
            query_id: self.query_id.clone(),
            model_id: self.pool[best.model].model_id.clone(),
            budget: best.level.budget,
            predicted_quality: best.quality,
            predicted_cost_usd: best.cost,
            score: best.score,
            instruction: instruction(best.level.budget),
            is_default: best.level.is_default,
        })
    }

    pub fn reactive_points(&self, policy: &RoutingPolicy, anchors: &ReactiveAnchors) -> Result<Vec<ReactivePoint>, RouteError> {
        let reactive = RoutingPolicy {
            mode: RoutingMode::Reactive,
            budget_limit: u32::MAX,
            ..*policy
        };
        Ok(self
            .candidates(&reactive, anchors)?
            .into_iter()
            .map(|c| ReactivePoint {
                model_id: self.pool[c.model].model_id.clone(),
                predicted_cost: c.cost,
                predicted_quality: c.quality,
                anchor_used: c.level.budget,
            })
            .collect())
    }
}

/// Routes one query with whatever mode `policy` names.
pub fn route<P: QualityPredictor + ?Sized>(
    p: &P,
    q: &Query,
    policy: &RoutingPolicy,
    anchors: &ReactiveAnchors,
) -> Result<RoutingDecision, RouteError> {
    policy.validate()?;
    Forecast::new(p, q)?.decide(policy, anchors)
}

/// Argmax over models only, each pinned to its reactive level.
pub fn route_reactive<P: QualityPredictor + ?Sized>(
    p: &P,
    q: &Query,
    policy: &RoutingPolicy,
    anchors: &ReactiveAnchors,
) -> Result<RoutingDecision, RouteError> {
    let policy = RoutingPolicy {
        mode: RoutingMode::Reactive,
        ..*policy
    };
    route(p, q, &policy, anchors)
}

/// Argmax over every (model, level) with budget within the limit.
pub fn route_discrete<P: QualityPredictor + ?Sized>(
    p: &P,
    q: &Query,
    policy: &RoutingPolicy,
) -> Result<RoutingDecision, RouteError> {
    let policy = RoutingPolicy {
        mode: RoutingMode::DiscreteCurve,
        ..*policy
    };
    route(p, q, &policy, &ReactiveAnchors::default())
}

/// Argmax over the interpolated curves on `[0, budget_limit]`. The objective
/// is piecewise linear in the budget, so only breakpoints are scored.
pub fn route_continuous<P: QualityPredictor + ?Sized>(
    p: &P,
    q: &Query,
    policy: &RoutingPolicy,
) -> Result<RoutingDecision, RouteError> {
    let policy = RoutingPolicy {
        mode: RoutingMode::ContinuousCurve,
        ..*policy
    };
    route(p, q, &policy, &ReactiveAnchors::default())
}

pub fn interpolate_quality<P: QualityPredictor + ?Sized>(
    p: &P,
    q: &Query,
    model_id: &str,
    b_prime: f64,
) -> Result<f64, RouteError> {
    let m = p
        .model_index(model_id)
        .ok_or_else(|| PredictorError::UnknownModel(model_id.to_string()))?;
    p.check_dim(&q.embedding)?;
    let mut points = Vec::new();
    for l in p.grid().curve_levels() {
        points.push((l.budget, p.predict(&q.embedding, m, l)?));
    }
    Ok(interpolate(&points, b_prime))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpaceBests {
    pub reactive_best: f64,
    pub reasoning_best: f64,
}

/// Best score over the reactive operating points and over every
/// (model, level) pair within the budget limit. `-inf` for an empty space.
pub fn enumerate_search_spaces<P: QualityPredictor + ?Sized>(
    p: &P,
    q: &Query,
    policy: &RoutingPolicy,
    anchors: &ReactiveAnchors,
) -> Result<SearchSpaceBests, RouteError> {
    policy.validate()?;
    let f = Forecast::new(p, q)?;
    let best = |mode| -> Result<f64, RouteError> {
        let pol = RoutingPolicy { mode, ..*policy };
        Ok(f
            .candidates(&pol, anchors)?
            .iter()
            .map(|c| c.score)
            .fold(f64::NEG_INFINITY, f64::max))
    };
    Ok(SearchSpaceBests {
        reactive_best: best(RoutingMode::Reactive)?,
        reasoning_best: best(RoutingMode::DiscreteCurve)?,
    })
}

/// Fixed table of qualities; for tests and brute-force checks.
#[derive(Debug, Clone)]
pub struct TablePredictor {
    pub pool: Vec<ModelSpec>,
    pub grid: BudgetGrid,
    pub embedding_dim: usize,
    /// `[query_index][model][level]` in `grid.levels()` order; the query index
    /// is read from the first embedding coordinate.
    pub table: Vec<Vec<f64>>,
}

impl QualityPredictor for TablePredictor {
    fn pool(&self) -> &[ModelSpec] {
        &self.pool
    }

    fn grid(&self) -> &BudgetGrid {
        &self.grid
    }

    fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    fn predict(&self, embedding: &[f64], model: usize, level: Level) -> Result<f64, PredictorError> {
        self.check_dim(embedding)?;
        let levels = self.grid.levels();
        let li = levels
            .binary_search(&level)
            .map_err(|_| crate::predictors::unknown_cell(&self.pool, model, level))?;
        let row = self
            .table
            .get(embedding[0] as usize)
            .ok_or_else(|| PredictorError::Config(format!("no table row {}", embedding[0])))?;
        row.get(model * levels.len() + li)
            .copied()
            .ok_or_else(|| crate::predictors::unknown_cell(&self.pool, model, level))
    }
}

#[cfg(test)]
mod tests;
