//! Synthetic benchmarks with known quality-cost curves.
//!
//! Each model follows a saturating exponential in the output budget,
//! scaled by a per-query affinity:
//!
//! ```text
//! quality(q, b) = sigmoid(<head(q), skill>) * ceiling * (1 - exp(-b / halflife))
//! ```
//!
//! where `head(q)` is the first `skill.len()` embedding components. Observed
//! samples add gaussian judge noise and draw output lengths from a
//! two-regime compliance model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{BudgetGrid, DataError, Dataset, Level, ModelSpec, Query, ResponseSample};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

fn default_input_tokens() -> u64 {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModelProfile {
    pub spec: ModelSpec,
    pub ceiling: f64,
    pub halflife: f64,
    pub skill_vector: Vec<f64>,
    pub compliance_reliability: f64,
}

impl SyntheticModelProfile {
    fn validate(&self, embedding_dim: usize) -> Result<(), SynthError> {
        let id = &self.spec.model_id;
        if !(0.0..=1.0).contains(&self.ceiling) {
            return Err(SynthError::Invalid(format!("{id}: ceiling must lie in [0,1]")));
        }
        if !(self.halflife > 0.0 && self.halflife.is_finite()) {
            return Err(SynthError::Invalid(format!("{id}: halflife must be positive")));
        }
        if !(0.0..=1.0).contains(&self.compliance_reliability) {
            return Err(SynthError::Invalid(format!(
                "{id}: compliance_reliability must lie in [0,1]"
            )));
        }
        if self.skill_vector.len() > embedding_dim {
            return Err(SynthError::Invalid(format!(
                "{id}: skill vector longer than the embedding ({} > {embedding_dim})",
                self.skill_vector.len()
            )));
        }
        Ok(())
    }

    /// Per-query multiplier in (0, 1).
    pub fn affinity(&self, q: &Query) -> f64 {
        let dot: f64 = q
            .embedding
            .iter()
            .zip(&self.skill_vector)
            .map(|(e, s)| e * s)
            .sum();
        1.0 / (1.0 + (-dot).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScenario {
    pub profiles: Vec<SyntheticModelProfile>,
    pub grid: BudgetGrid,
    pub n_queries: usize,
    pub embedding_dim: usize,
    pub seed: u64,
    pub noise_sd: f64,
    #[serde(default = "default_input_tokens")]
    pub input_tokens: u64,
}

impl SyntheticScenario {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_queries == 0 {
            return Err(SynthError::Invalid("n_queries must be positive".into()));
        }
        if self.embedding_dim == 0 {
            return Err(SynthError::Invalid("embedding_dim must be positive".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(SynthError::Invalid("noise_sd must be >= 0".into()));
        }
        if self.profiles.is_empty() {
            return Err(SynthError::Invalid("scenario has no models".into()));
        }
        self.grid.validate()?;
        for p in &self.profiles {
            p.validate(self.embedding_dim)?;
        }
        Ok(())
    }

    pub fn profile(&self, model_id: &str) -> Option<&SyntheticModelProfile> {
        self.profiles.iter().find(|p| p.spec.model_id == model_id)
    }
}

/// Noise-free quality of `profile` answering `q` within `budget` tokens.
pub fn true_quality(profile: &SyntheticModelProfile, q: &Query, budget: f64) -> f64 {
    let saturation = 1.0 - (-budget.max(0.0) / profile.halflife).exp();
    (profile.affinity(q) * profile.ceiling * saturation).clamp(0.0, 1.0)
}

/// Analytic curve at every grid level, ascending by budget.
pub fn true_curve(profile: &SyntheticModelProfile, q: &Query, grid: &BudgetGrid) -> Vec<(u32, f64)> {
    grid.levels()
        .into_iter()
        .map(|l| (l.budget, true_quality(profile, q, f64::from(l.budget))))
        .collect()
}

/// Output length for one response: inside the budget with probability
/// `reliability`, otherwise an overshoot past 1.1 times the budget and up to
/// twice it. The default level has no instruction and is truncated at its cap.
fn draw_tokens(rng: &mut ChaCha8Rng, level: Level, reliability: f64) -> u64 {
    let b = u64::from(level.budget);
    if level.is_default {
        return rng.random_range(b.div_ceil(2)..=b);
    }
    let complies = rng.random::<f64>() < reliability;
    if complies {
        rng.random_range(b.div_ceil(2)..=b)
    } else {
        rng.random_range(b * 11 / 10 + 1..=2 * b)
    }
}

/// Generates a complete-coverage dataset. Query `i` draws from its own
/// ChaCha stream, so the result does not depend on evaluation order.
pub fn generate(scn: &SyntheticScenario) -> Result<Dataset, SynthError> {
    scn.validate()?;
    let levels = scn.grid.levels();
    let noise = Normal::new(0.0, scn.noise_sd).map_err(|e| SynthError::Invalid(e.to_string()))?;
    let width = scn.n_queries.to_string().len().max(5);

    let mut queries = Vec::with_capacity(scn.n_queries);
    let mut samples = Vec::with_capacity(scn.n_queries * scn.profiles.len() * levels.len());
    for i in 0..scn.n_queries {
        let mut rng = ChaCha8Rng::seed_from_u64(scn.seed);
        rng.set_stream(i as u64);
        let embedding: Vec<f64> = (0..scn.embedding_dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let q = Query::new(format!("q{i:0width$}"), embedding);
        for p in &scn.profiles {
            for &level in &levels {
                let truth = true_quality(p, &q, f64::from(level.budget));
                let observed = if scn.noise_sd > 0.0 {
                    (truth + noise.sample(&mut rng)).clamp(0.0, 1.0)
                } else {
                    truth
                };
                let tokens = draw_tokens(&mut rng, level, p.compliance_reliability);
                samples.push(ResponseSample {
                    query_id: q.query_id.clone(),
                    model_id: p.spec.model_id.clone(),
                    budget: level.budget,
                    is_default: level.is_default,
                    quality: observed,
                    actual_output_tokens: tokens,
                    input_tokens: scn.input_tokens,
                });
            }
        }
        queries.push(q);
    }
    let pool = scn.profiles.iter().map(|p| p.spec.clone()).collect();
    Ok(Dataset::new(
        pool,
        scn.grid.clone(),
        queries,
        samples,
        scn.embedding_dim,
        true,
    )?)
}

/// Ready-made scenarios used by the examples, CLI defaults, and tests.
pub mod presets {
    use super::*;
    use crate::pricing::bundled_model;

    fn profile(
        model: &str,
        ceiling: f64,
        halflife: f64,
        skill: &[f64],
        reliability: f64,
    ) -> SyntheticModelProfile {
        SyntheticModelProfile {
            spec: bundled_model(model).expect("preset model is bundled"),
            ceiling,
            halflife,
            skill_vector: skill.to_vec(),
            compliance_reliability: reliability,
        }
    }

    /// Five bundled models with heterogeneous ceilings, saturation speeds,
    /// topic skills, and prices. Expensive models saturate well before the
    /// default cap, which is what budget-aware routing exploits.
    pub fn heterogeneous_profiles() -> Vec<SyntheticModelProfile> {
        vec![
            profile("glm-4.6", 0.97, 120.0, &[1.2, 1.2, 0.8], 0.97),
            profile("qwen3-235b-a22b-instruct", 0.92, 150.0, &[2.0, -0.6, 0.4], 0.95),
            profile("llama-3.1-70b-instruct", 0.85, 100.0, &[-1.8, 1.4, 0.2], 0.9),
            profile("gemma-3-4b-it", 0.65, 60.0, &[-0.5, -1.5, 1.5], 0.6),
            profile("qwen2.5-math-1.5b-instruct", 0.55, 40.0, &[0.3, 0.3, -2.0], 0.4),
        ]
    }

    /// A noise-free scenario over the heterogeneous pool.
    pub fn saturating(grid: BudgetGrid, n_queries: usize, embedding_dim: usize, seed: u64) -> SyntheticScenario {
        SyntheticScenario {
            profiles: heterogeneous_profiles(),
            grid,
            n_queries,
            embedding_dim,
            seed,
            noise_sd: 0.0,
            input_tokens: default_input_tokens(),
        }
    }
}
