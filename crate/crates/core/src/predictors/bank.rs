use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Adam, CompactHead, MlpHead, DEFAULT_HIDDEN};
use super::{cell_stream, unknown_cell, PredictorError, QualityPredictor};
use crate::data::{BudgetGrid, Dataset, Level, ModelSpec, Query};
use crate::linalg::Matrix;

fn default_epochs() -> usize {
    100
}
fn default_lr() -> f64 {
    1e-4
}
fn default_batch() -> usize {
    256
}
fn default_hidden() -> Vec<usize> {
    DEFAULT_HIDDEN.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            learning_rate: default_lr(),
            batch_size: default_batch(),
            seed: 0,
            hidden: default_hidden(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PredictorError> {
        if self.epochs == 0 {
            return Err(PredictorError::Config("epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(PredictorError::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(PredictorError::Config("batch_size must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(PredictorError::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadMeta {
    pub model_id: String,
    pub budget: u32,
    pub is_default: bool,
    pub n_samples: usize,
    pub final_train_mse: f64,
    /// Mean squared error seen during each epoch, before each batch's update.
    pub epoch_mse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub heads: Vec<HeadMeta>,
}

/// A trained bank of quality heads, one per (model, level) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RouterModel {
    pub(super) pool: Vec<ModelSpec>,
    pub(super) grid: BudgetGrid,
    pub(super) levels: Vec<Level>,
    pub(super) embedding_dim: usize,
    // [model][level] in pool and grid order
    pub(super) heads: Vec<MlpHead>,
    // what `predict` evaluates; same order as `heads`
    compact: Vec<CompactHead>,
    pub(super) meta: TrainingMeta,
}

impl RouterModel {
    pub(super) fn from_parts(
        pool: Vec<ModelSpec>,
        grid: BudgetGrid,
        embedding_dim: usize,
        heads: Vec<MlpHead>,
        meta: TrainingMeta,
    ) -> Result<Self, PredictorError> {
        let levels = grid.levels();
        if heads.len() != pool.len() * levels.len() {
            return Err(PredictorError::Checkpoint(format!(
                "expected {} heads, found {}",
                pool.len() * levels.len(),
                heads.len()
            )));
        }
        if let Some(h) = heads.iter().find(|h| h.input_dim() != embedding_dim) {
            return Err(PredictorError::Dimension {
                expected: embedding_dim,
                found: h.input_dim(),
            });
        }
        Ok(Self {
            pool,
            grid,
            levels,
            embedding_dim,
            compact: heads.iter().map(CompactHead::new).collect(),
            heads,
            meta,
        })
    }

    pub fn meta(&self) -> &TrainingMeta {
        &self.meta
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn head(&self, model: usize, level: Level) -> Option<&MlpHead> {
        let li = self.levels.binary_search(&level).ok()?;
        (model < self.pool.len()).then(|| &self.heads[model * self.levels.len() + li])
    }

    pub fn head_meta(&self, model_id: &str, level: Level) -> Option<&HeadMeta> {
        self.meta
            .heads
            .iter()
            .find(|h| h.model_id == model_id && h.budget == level.budget && h.is_default == level.is_default)
    }

    /// Forward pass of the (model, level) head.
    pub fn predict_quality(&self, q: &Query, model_id: &str, level: Level) -> Result<f64, PredictorError> {
        self.predict_query(q, model_id, level)
    }

    /// Same heads, grid limited to `anchors` (a subset of the trained anchors).
    /// Equal to training on the restricted grid because each head's random
    /// stream depends only on its own cell.
    pub fn restrict_anchors(&self, anchors: &[u32]) -> Result<Self, PredictorError> {
        if let Some(a) = anchors.iter().find(|a| !self.grid.anchors.contains(a)) {
            return Err(PredictorError::Config(format!("anchor {a} is not in the trained grid")));
        }
        let grid = BudgetGrid::new(anchors.to_vec(), self.grid.default_cap)
            .map_err(|e| PredictorError::Config(e.to_string()))?;
        let levels = grid.levels();
        let mut heads = Vec::with_capacity(self.pool.len() * levels.len());
        let mut metas = Vec::new();
        for (mi, m) in self.pool.iter().enumerate() {
            for &level in &levels {
                heads.push(self.head(mi, level).expect("subset level is trained").clone());
                if let Some(h) = self.head_meta(&m.model_id, level) {
                    metas.push(h.clone());
                }
            }
        }
        let meta = TrainingMeta {
            heads: metas,
            ..self.meta.clone()
        };
        Self::from_parts(self.pool.clone(), grid, self.embedding_dim, heads, meta)
    }

    /// Keeps the listed models, in the given order.
    pub fn select_models(&self, model_ids: &[&str]) -> Result<Self, PredictorError> {
        let mut pool = Vec::new();
        let mut heads = Vec::new();
        for id in model_ids {
            let mi = self
                .model_index(id)
                .ok_or_else(|| PredictorError::UnknownModel(id.to_string()))?;
            pool.push(self.pool[mi].clone());
            heads.extend_from_slice(&self.heads[mi * self.levels.len()..(mi + 1) * self.levels.len()]);
        }
        let meta = TrainingMeta {
            heads: self
                .meta
                .heads
                .iter()
                .filter(|h| model_ids.contains(&h.model_id.as_str()))
                .cloned()
                .collect(),
            ..self.meta.clone()
        };
        Self::from_parts(pool, self.grid.clone(), self.embedding_dim, heads, meta)
    }
}

impl QualityPredictor for RouterModel {
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
        let li = self
            .levels
            .binary_search(&level)
            .ok()
            .filter(|_| model < self.pool.len())
            .ok_or_else(|| unknown_cell(&self.pool, model, level))?;
        Ok(self.compact[model * self.levels.len() + li].forward(embedding))
    }
}

/// Gathers the (embedding, quality) training pairs of one cell.
pub(crate) fn cell_data(train: &Dataset, model: usize, level_idx: usize) -> (Matrix, Vec<f64>) {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for (qi, q) in train.queries().iter().enumerate() {
        if let Some(s) = train.sample_at(qi, model, level_idx) {
            rows.extend_from_slice(&q.embedding);
            targets.push(s.quality);
        }
    }
    (Matrix::from_vec(targets.len(), train.embedding_dim(), rows), targets)
}

/// Trains one head on its cell's pairs with minibatch Adam.
///
/// `stream` selects the head's private random stream under `cfg.seed`; it
/// drives both the initial weights and the per-epoch shuffles.
pub fn train_head(
    xs: &Matrix,
    ys: &[f64],
    cfg: &TrainConfig,
    stream: u64,
) -> Result<(MlpHead, f64, Vec<f64>), usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let n = ys.len();
    let dim = xs.cols();
    let mut head = MlpHead::init_uniform(dim, &cfg.hidden, &mut rng);
    let mut adam = Adam::new(&head, cfg.learning_rate);
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_mse = Vec::with_capacity(cfg.epochs);
    let mut batch_x = Vec::with_capacity(cfg.batch_size * dim);
    let mut batch_y = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in chunk {
                batch_x.extend_from_slice(xs.row(i));
                batch_y.push(ys[i]);
            }
            let bx = Matrix::from_vec(chunk.len(), dim, std::mem::take(&mut batch_x));
            let (loss, grads) = head.batch_gradient(&bx, &batch_y);
            batch_x = bx.into_vec();
            if !loss.is_finite() {
                return Err(epoch);
            }
            sse += loss * chunk.len() as f64;
            adam.update(&mut head, &grads);
        }
        epoch_mse.push(sse / n as f64);
        if !head.is_finite() {
            return Err(epoch);
        }
    }

    let preds = head.forward_batch(xs);
    let mse = preds.iter().zip(ys).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / n as f64;
    if !mse.is_finite() {
        return Err(cfg.epochs);
    }
    Ok((head, mse, epoch_mse))
}

/// Trains one independent head per (model, level) cell of `train`.
pub fn train_mlp_bank(train: &Dataset, cfg: &TrainConfig) -> Result<RouterModel, PredictorError> {
    cfg.validate()?;
    let levels = train.levels().to_vec();
    let mut heads = Vec::with_capacity(train.pool().len() * levels.len());
    let mut metas = Vec::with_capacity(heads.capacity());
    for (mi, m) in train.pool().iter().enumerate() {
        for (li, &level) in levels.iter().enumerate() {
            let (xs, ys) = cell_data(train, mi, li);
            if ys.is_empty() {
                return Err(PredictorError::EmptyCell {
                    model_id: m.model_id.clone(),
                    level,
                });
            }
            let (head, mse, epoch_mse) = train_head(&xs, &ys, cfg, cell_stream(&m.model_id, level))
                .map_err(|epoch| PredictorError::Divergence {
                    model_id: m.model_id.clone(),
                    level,
                    epoch,
                })?;
            heads.push(head);
            metas.push(HeadMeta {
                model_id: m.model_id.clone(),
                budget: level.budget,
                is_default: level.is_default,
                n_samples: ys.len(),
                final_train_mse: mse,
                epoch_mse,
            });
        }
    }
    let meta = TrainingMeta {
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        hidden: cfg.hidden.clone(),
        heads: metas,
    };
    RouterModel::from_parts(
        train.pool().to_vec(),
        train.grid().clone(),
        train.embedding_dim(),
        heads,
        meta,
    )
}
