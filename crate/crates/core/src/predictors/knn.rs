use super::bank::cell_data;
use super::{unknown_cell, PredictorError, QualityPredictor};
use crate::data::{BudgetGrid, Dataset, Level, ModelSpec, Query};

pub const DEFAULT_K: usize = 5;

/// Mean quality of the `k` nearest training queries (Euclidean), per cell.
#[derive(Debug, Clone)]
pub struct KnnPredictor {
    k: usize,
    pool: Vec<ModelSpec>,
    grid: BudgetGrid,
    levels: Vec<Level>,
    embedding_dim: usize,
    // [model][level] -> (embedding, quality) in insertion order
    bank: Vec<Vec<(Vec<f64>, f64)>>,
}

impl KnnPredictor {
    pub fn fit(train: &Dataset, k: usize) -> Result<Self, PredictorError> {
        if k == 0 {
            return Err(PredictorError::Config("k must be positive".into()));
        }
        let levels = train.levels().to_vec();
        let mut bank = Vec::with_capacity(train.pool().len() * levels.len());
        for (mi, m) in train.pool().iter().enumerate() {
            for (li, &level) in levels.iter().enumerate() {
                let (xs, ys) = cell_data(train, mi, li);
                if ys.len() < k {
                    return Err(PredictorError::KTooLarge {
                        model_id: m.model_id.clone(),
                        level,
                        k,
                        size: ys.len(),
                    });
                }
                bank.push(
                    ys.iter()
                        .enumerate()
                        .map(|(i, &y)| (xs.row(i).to_vec(), y))
                        .collect(),
                );
            }
        }
        Ok(Self {
            k,
            pool: train.pool().to_vec(),
            grid: train.grid().clone(),
            levels,
            embedding_dim: train.embedding_dim(),
            bank,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn cell(&self, model: usize, level: Level) -> Option<&[(Vec<f64>, f64)]> {
        let li = self.levels.binary_search(&level).ok()?;
        (model < self.pool.len()).then(|| self.bank[model * self.levels.len() + li].as_slice())
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl QualityPredictor for KnnPredictor {
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
        let cell = self
            .cell(model, level)
            .ok_or_else(|| unknown_cell(&self.pool, model, level))?;
        let mut dist: Vec<(f64, usize)> = cell
            .iter()
            .enumerate()
            .map(|(i, (e, _))| (squared_distance(e, embedding), i))
            .collect();
        // Stable sort keeps insertion order among equal distances.
        dist.sort_by(|a, b| a.0.total_cmp(&b.0));
        let k = self.k.min(dist.len());
        Ok(dist[..k].iter().map(|&(_, i)| cell[i].1).sum::<f64>() / k as f64)
    }
}

pub fn knn_predict(p: &KnnPredictor, q: &Query, model_id: &str, level: Level) -> Result<f64, PredictorError> {
    p.predict_query(q, model_id, level)
}
