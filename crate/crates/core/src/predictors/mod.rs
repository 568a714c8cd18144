//! Quality predictors: the per-(model, budget) MLP bank and the KNN and
//! ridge-regression baselines.

mod bank;
mod checkpoint;
mod knn;
mod linear;
pub mod mlp;

use thiserror::Error;

use crate::data::{BudgetGrid, Level, ModelSpec, Query};

pub use bank::{train_head, train_mlp_bank, HeadMeta, RouterModel, TrainConfig, TrainingMeta};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT};
pub use knn::{knn_predict, KnnPredictor, DEFAULT_K};
pub use linear::{linear_fit, LinearPredictor, DEFAULT_RIDGE};
pub use mlp::{mlp_gradient, Adam, CompactHead, Dense, Gradients, MlpHead, DEFAULT_HIDDEN};

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("no predictor for model {model_id} at budget {level}")]
    UnknownCell { model_id: String, level: Level },
    #[error("unknown model {0}")]
    UnknownModel(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("training cell ({model_id}, {level}) has no samples")]
    EmptyCell { model_id: String, level: Level },
    #[error("training diverged for head ({model_id}, {level}) at epoch {epoch}")]
    Divergence {
        model_id: String,
        level: Level,
        epoch: usize,
    },
    #[error("singular system for ({model_id}, {level}); retry with ridge > 0")]
    Singular { model_id: String, level: Level },
    #[error("cell ({model_id}, {level}) has {size} entries, fewer than k = {k}")]
    KTooLarge {
        model_id: String,
        level: Level,
        k: usize,
        size: usize,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Anything that predicts per-(model, level) quality from a query embedding.
///
/// Model indices refer to positions in [`QualityPredictor::pool`].
pub trait QualityPredictor {
    fn pool(&self) -> &[ModelSpec];
    fn grid(&self) -> &BudgetGrid;
    fn embedding_dim(&self) -> usize;
    fn predict(&self, embedding: &[f64], model: usize, level: Level) -> Result<f64, PredictorError>;

    fn model_index(&self, model_id: &str) -> Option<usize> {
        self.pool().iter().position(|m| m.model_id == model_id)
    }

    fn check_dim(&self, embedding: &[f64]) -> Result<(), PredictorError> {
        if embedding.len() == self.embedding_dim() {
            Ok(())
        } else {
            Err(PredictorError::Dimension {
                expected: self.embedding_dim(),
                found: embedding.len(),
            })
        }
    }

    /// Prediction by model id, for one query.
    fn predict_query(&self, q: &Query, model_id: &str, level: Level) -> Result<f64, PredictorError> {
        let m = self
            .model_index(model_id)
            .ok_or_else(|| PredictorError::UnknownModel(model_id.to_string()))?;
        self.check_dim(&q.embedding)?;
        self.predict(&q.embedding, m, level)
    }
}

pub(crate) fn unknown_cell(pool: &[ModelSpec], model: usize, level: Level) -> PredictorError {
    PredictorError::UnknownCell {
        model_id: pool
            .get(model)
            .map_or_else(|| format!("#{model}"), |m| m.model_id.clone()),
        level,
    }
}

/// Deterministic stream id for a (model, level) cell, independent of its
/// position in the pool or grid.
pub(crate) fn cell_stream(model_id: &str, level: Level) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let tail = [level.budget.to_le_bytes().as_slice(), &[u8::from(level.is_default)]].concat();
    for &b in model_id.as_bytes().iter().chain(&[0xff]).chain(&tail) {
        h ^= u64::from(b);
        h = h.wrapping_mul(PRIME);
    }
    h
}
