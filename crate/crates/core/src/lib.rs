//! Budget-aware model routing.
//!
//! Instead of treating each candidate model as a single (quality, cost)
//! point, the router predicts a quality-cost curve per model over a grid of
//! output-token budgets and picks the (model, budget) pair that maximizes
//! `(1 - lambda) * quality - lambda * normalized_cost`. The `eval` module
//! sweeps `lambda` to trace deferral curves and computes AUDC, QNC, and peak
//! quality against point and curve oracles.

pub mod data;
pub mod eval;
pub mod linalg;
pub mod predictors;
pub mod pricing;
pub mod router;
pub mod synth;
