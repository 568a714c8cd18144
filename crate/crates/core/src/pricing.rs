//! Dollar costs from token counts.

use crate::data::ModelSpec;

const TOKENS_PER_PRICE_UNIT: f64 = 1e6;

/// Absolute tolerance for comparing dollar amounts.
pub const COST_EPSILON: f64 = 1e-12;

static BUNDLED_POOL: &str = include_str!("../data/pricing.json");

/// Cost of `tokens` output tokens.
pub fn output_cost(m: &ModelSpec, tokens: u64) -> f64 {
    tokens as f64 * m.output_price / TOKENS_PER_PRICE_UNIT
}

/// Input cost plus output cost for one call.
pub fn query_cost(m: &ModelSpec, input_tokens: u64, output_tokens: u64) -> f64 {
    input_tokens as f64 * m.input_price / TOKENS_PER_PRICE_UNIT + output_cost(m, output_tokens)
}

/// The bundled price list of open-weight models (dollars per million tokens).
pub fn bundled_pool() -> Vec<ModelSpec> {
    serde_json::from_str(BUNDLED_POOL).expect("bundled pricing fixture parses")
}

/// Looks up a bundled model by id or display name.
pub fn bundled_model(name: &str) -> Option<ModelSpec> {
    bundled_pool()
        .into_iter()
        .find(|m| m.model_id == name || m.display_name == name)
}
