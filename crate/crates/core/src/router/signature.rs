//! Validation-error signatures and routing to models that have no trained heads.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{route_discrete, RouteError, RoutingDecision, RoutingPolicy};
use crate::data::{BudgetGrid, Dataset, Level, ModelSpec, Query};
use crate::predictors::{PredictorError, QualityPredictor};

/// Softmax temperature over signature distances.
pub const DEFAULT_TEMPERATURE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSignature {
    pub model_id: String,
    /// Anchor budget -> mean absolute error of the reference predictor.
    pub per_budget_error: BTreeMap<u32, f64>,
    pub mean_error: f64,
}

impl ModelSignature {
    /// Errors in ascending anchor order.
    pub fn vector(&self) -> Vec<f64> {
        self.per_budget_error.values().copied().collect()
    }

    pub fn distance(&self, other: &ModelSignature) -> f64 {
        let (a, b) = (self.vector(), other.vector());
        assert_eq!(a.len(), b.len(), "signatures over different anchors");
        a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }
}

/// Mean of every pool head's prediction at `level`.
fn reference<P: QualityPredictor + ?Sized>(p: &P, embedding: &[f64], level: Level) -> Result<f64, PredictorError> {
    let n = p.pool().len();
    let mut sum = 0.0;
    for m in 0..n {
        sum += p.predict(embedding, m, level)?;
    }
    Ok(sum / n as f64)
}

/// Per-anchor mean absolute error between the pool-average prediction and
/// `model_id`'s observed quality on `val`.
pub fn build_signature<P: QualityPredictor + ?Sized>(
    p: &P,
    val: &Dataset,
    model_id: &str,
) -> Result<ModelSignature, RouteError> {
    if p.pool().is_empty() {
        return Err(RouteError::EmptySignatures);
    }
    let mut per_budget_error = BTreeMap::new();
    for &b in &p.grid().anchors {
        let level = Level::anchor(b);
        let mut total = 0.0;
        for q in val.queries() {
            let observed = val
                .sample(&q.query_id, model_id, level)
                .ok_or_else(|| RouteError::Coverage {
                    model_id: model_id.to_string(),
                    level,
                })?
                .quality;
            p.check_dim(&q.embedding)?;
            total += (reference(p, &q.embedding, level)? - observed).abs();
        }
        let n = val.queries().len().max(1);
        per_budget_error.insert(b, total / n as f64);
    }
    let mean_error = per_budget_error.values().sum::<f64>() / per_budget_error.len() as f64;
    Ok(ModelSignature {
        model_id: model_id.to_string(),
        per_budget_error,
        mean_error,
    })
}

/// A trained predictor extended with models that have only a signature.
/// An added model's prediction is the softmax-weighted mean of the trained
/// models' predictions, weighted by `exp(-distance / temperature)`.
#[derive(Debug, Clone)]
pub struct UnseenPool<'a, P: QualityPredictor + ?Sized> {
    inner: &'a P,
    pool: Vec<ModelSpec>,
    // per added model: (trained model index, weight)
    weights: Vec<Vec<(usize, f64)>>,
}

impl<'a, P: QualityPredictor + ?Sized> UnseenPool<'a, P> {
    pub fn new(
        inner: &'a P,
        signatures: &[ModelSignature],
        added: &[(ModelSpec, ModelSignature)],
        temperature: f64,
    ) -> Result<Self, RouteError> {
        if !(temperature > 0.0) {
            return Err(RouteError::Policy("temperature must be positive".into()));
        }
        let trained: Vec<(usize, &ModelSignature)> = signatures
            .iter()
            .map(|s| {
                inner
                    .model_index(&s.model_id)
                    .map(|m| (m, s))
                    .ok_or_else(|| PredictorError::UnknownModel(s.model_id.clone()).into())
            })
            .collect::<Result<_, RouteError>>()?;
        if trained.is_empty() {
            return Err(RouteError::EmptySignatures);
        }
        let mut pool = inner.pool().to_vec();
        let mut weights = Vec::with_capacity(added.len());
        for (spec, sig) in added {
            let logits: Vec<f64> = trained.iter().map(|(_, s)| -sig.distance(s) / temperature).collect();
            let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exp: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
            let z: f64 = exp.iter().sum();
            weights.push(trained.iter().zip(&exp).map(|(&(m, _), e)| (m, e / z)).collect());
            pool.push(spec.clone());
        }
        Ok(Self { inner, pool, weights })
    }

    /// Neighbor weights of the `i`-th added model, as (trained model id, weight).
    pub fn weights(&self, i: usize) -> Vec<(&str, f64)> {
        self.weights[i]
            .iter()
            .map(|&(m, w)| (self.pool[m].model_id.as_str(), w))
            .collect()
    }
}

impl<P: QualityPredictor + ?Sized> QualityPredictor for UnseenPool<'_, P> {
    fn pool(&self) -> &[ModelSpec] {
        &self.pool
    }

    fn grid(&self) -> &BudgetGrid {
        self.inner.grid()
    }

    fn embedding_dim(&self) -> usize {
        self.inner.embedding_dim()
    }

    fn predict(&self, embedding: &[f64], model: usize, level: Level) -> Result<f64, PredictorError> {
        let trained = self.inner.pool().len();
        if model < trained {
            return self.inner.predict(embedding, model, level);
        }
        let ws = self
            .weights
            .get(model - trained)
            .ok_or_else(|| crate::predictors::unknown_cell(&self.pool, model, level))?;
        let mut q = 0.0;
        for &(m, w) in ws {
            q += w * self.inner.predict(embedding, m, level)?;
        }
        Ok(q)
    }
}

/// Discrete routing over the trained pool plus `added`, using the default
/// temperature.
pub fn route_unseen<P: QualityPredictor + ?Sized>(
    p: &P,
    signatures: &[ModelSignature],
    added: &[(ModelSpec, ModelSignature)],
    q: &Query,
    policy: &RoutingPolicy,
) -> Result<RoutingDecision, RouteError> {
    let pool = UnseenPool::new(p, signatures, added, DEFAULT_TEMPERATURE)?;
    route_discrete(&pool, q, policy)
}
