//! Shared vocabulary: model pool, budget grid, queries, recorded responses,
//! and the [`Dataset`] that ties them together.

mod io;
mod split;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_dataset, save_dataset, DatasetPaths};
pub use split::split_dataset;

/// Quality values this far outside `[0, 1]` are clamped instead of rejected.
pub const QUALITY_CLAMP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{file}:{line}: parse error: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("coverage error: {} missing (query, model, budget) triples: {}", .missing.len(), format_missing(.missing))]
    Coverage { missing: Vec<SampleKey> },
    #[error("dimension mismatch: query {query_id} has {found} components, expected {expected}")]
    Dimension {
        query_id: String,
        expected: usize,
        found: usize,
    },
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn format_missing(missing: &[SampleKey]) -> String {
    const SHOWN: usize = 20;
    let mut out: Vec<String> = missing.iter().take(SHOWN).map(ToString::to_string).collect();
    if missing.len() > SHOWN {
        out.push(format!("... and {} more", missing.len() - SHOWN));
    }
    out.join(", ")
}

/// A candidate model and its per-token prices (dollars per million tokens).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: String,
    pub display_name: String,
    #[serde(rename = "input_price_per_1m", serialize_with = "io::canonical_f64")]
    pub input_price: f64,
    #[serde(rename = "output_price_per_1m", serialize_with = "io::canonical_f64")]
    pub output_price: f64,
}

impl ModelSpec {
    pub fn new(model_id: impl Into<String>, input_price: f64, output_price: f64) -> Self {
        let model_id = model_id.into();
        Self {
            display_name: model_id.clone(),
            model_id,
            input_price,
            output_price,
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        if self.model_id.is_empty() {
            return Err(DataError::Schema("empty model_id".into()));
        }
        for (name, price) in [("input", self.input_price), ("output", self.output_price)] {
            if !(price.is_finite() && price >= 0.0) {
                return Err(DataError::Schema(format!(
                    "model {}: {name} price must be finite and >= 0, got {price}",
                    self.model_id
                )));
            }
        }
        Ok(())
    }
}

/// One point on the budget axis.
///
/// The unconstrained "default" level lives at `default_cap` tokens and is
/// flagged so it stays distinct from an explicit anchor of the same size.
/// Ordering is by budget, then explicit anchor before default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Level {
    pub budget: u32,
    pub is_default: bool,
}

impl Level {
    pub const fn anchor(budget: u32) -> Self {
        Self {
            budget,
            is_default: false,
        }
    }

    pub const fn default_cap(budget: u32) -> Self {
        Self {
            budget,
            is_default: true,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_default {
            write!(f, "default({})", self.budget)
        } else {
            write!(f, "{}", self.budget)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetGrid {
    pub anchors: Vec<u32>,
    pub default_cap: u32,
}

impl BudgetGrid {
    pub fn new(anchors: Vec<u32>, default_cap: u32) -> Result<Self, DataError> {
        let grid = Self {
            anchors,
            default_cap,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// The sixteen levels used for the bundled pool: fifteen explicit
    /// anchors plus the unconstrained default capped at 4000 tokens.
    pub fn standard() -> Self {
        Self {
            anchors: vec![
                10, 20, 30, 40, 50, 80, 100, 150, 200, 300, 500, 800, 1200, 2000, 4000,
            ],
            default_cap: 4000,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.anchors.is_empty() {
            return Err(DataError::Schema("budget grid has no anchors".into()));
        }
        if self.anchors[0] == 0 {
            return Err(DataError::Schema("budget anchors must be positive".into()));
        }
        if self.anchors.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DataError::Schema(
                "budget anchors must be strictly increasing".into(),
            ));
        }
        if self.default_cap == 0 {
            return Err(DataError::Schema("default_cap must be positive".into()));
        }
        Ok(())
    }

    /// Every level a dataset must cover: each anchor plus the default level.
    pub fn levels(&self) -> Vec<Level> {
        let mut levels: Vec<Level> = self.anchors.iter().map(|&b| Level::anchor(b)).collect();
        levels.push(Level::default_cap(self.default_cap));
        levels.sort();
        levels
    }

    /// Levels that form the interpolated quality-cost curve. The default
    /// level only contributes a point when no explicit anchor shares its budget.
    pub fn curve_levels(&self) -> Vec<Level> {
        self.levels()
            .into_iter()
            .filter(|l| !l.is_default || !self.anchors.contains(&l.budget))
            .collect()
    }

    pub fn default_level(&self) -> Level {
        Level::default_cap(self.default_cap)
    }

    pub fn contains(&self, level: Level) -> bool {
        if level.is_default {
            level.budget == self.default_cap
        } else {
            self.anchors.binary_search(&level.budget).is_ok()
        }
    }

    pub fn max_budget(&self) -> u32 {
        self.default_cap.max(*self.anchors.last().unwrap_or(&0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    #[serde(serialize_with = "io::canonical_f64_vec")]
    pub embedding: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_tag: Option<String>,
}

impl Query {
    pub fn new(query_id: impl Into<String>, embedding: Vec<f64>) -> Self {
        Self {
            query_id: query_id.into(),
            embedding,
            raw_text: None,
            source_tag: None,
        }
    }
}

/// One recorded outcome of asking `model_id` to answer `query_id` within `budget` tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSample {
    pub query_id: String,
    pub model_id: String,
    pub budget: u32,
    pub is_default: bool,
    #[serde(serialize_with = "io::canonical_f64")]
    pub quality: f64,
    pub actual_output_tokens: u64,
    pub input_tokens: u64,
}

impl ResponseSample {
    pub fn level(&self) -> Level {
        Level {
            budget: self.budget,
            is_default: self.is_default,
        }
    }
}

/// Identity of one (query, model, level) cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SampleKey {
    pub query_id: String,
    pub model_id: String,
    pub level: Level,
}

impl fmt::Display for SampleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.query_id, self.model_id, self.level)
    }
}

/// A validated collection of queries and recorded responses.
///
/// Construction checks every invariant and builds a positional index so
/// lookups during sweeps avoid string hashing.
#[derive(Debug, Clone)]
pub struct Dataset {
    pool: Vec<ModelSpec>,
    grid: BudgetGrid,
    queries: Vec<Query>,
    samples: Vec<ResponseSample>,
    embedding_dim: usize,
    levels: Vec<Level>,
    // [query][model][level] -> sample position
    cells: Vec<Option<usize>>,
    query_pos: HashMap<String, usize>,
    model_pos: HashMap<String, usize>,
}

impl Dataset {
    /// Validates and indexes. Out-of-range qualities within
    /// [`QUALITY_CLAMP_TOLERANCE`] are clamped in place.
    pub fn new(
        pool: Vec<ModelSpec>,
        grid: BudgetGrid,
        queries: Vec<Query>,
        mut samples: Vec<ResponseSample>,
        embedding_dim: usize,
        strict_coverage: bool,
    ) -> Result<Self, DataError> {
        grid.validate()?;
        if embedding_dim == 0 {
            return Err(DataError::Schema("embedding_dim must be positive".into()));
        }
        if pool.is_empty() {
            return Err(DataError::Schema("model pool is empty".into()));
        }
        let mut model_pos = HashMap::with_capacity(pool.len());
        for (i, m) in pool.iter().enumerate() {
            m.validate()?;
            if model_pos.insert(m.model_id.clone(), i).is_some() {
                return Err(DataError::Schema(format!(
                    "duplicate model_id {}",
                    m.model_id
                )));
            }
        }
        let mut query_pos = HashMap::with_capacity(queries.len());
        for (i, q) in queries.iter().enumerate() {
            if q.embedding.len() != embedding_dim {
                return Err(DataError::Dimension {
                    query_id: q.query_id.clone(),
                    expected: embedding_dim,
                    found: q.embedding.len(),
                });
            }
            if q.embedding.iter().any(|x| !x.is_finite()) {
                return Err(DataError::Schema(format!(
                    "query {} has a non-finite embedding component",
                    q.query_id
                )));
            }
            if query_pos.insert(q.query_id.clone(), i).is_some() {
                return Err(DataError::Schema(format!(
                    "duplicate query_id {}",
                    q.query_id
                )));
            }
        }

        let levels = grid.levels();
        let n_levels = levels.len();
        let mut cells = vec![None; queries.len() * pool.len() * n_levels];
        for (si, s) in samples.iter_mut().enumerate() {
            s.quality = checked_quality(s.quality).map_err(|msg| {
                DataError::Schema(format!(
                    "sample ({}, {}, {}): {msg}",
                    s.query_id, s.model_id, s.budget
                ))
            })?;
            let qi = *query_pos.get(&s.query_id).ok_or_else(|| {
                DataError::Schema(format!("sample references unknown query_id {}", s.query_id))
            })?;
            let mi = *model_pos.get(&s.model_id).ok_or_else(|| {
                DataError::Schema(format!("sample references unknown model_id {}", s.model_id))
            })?;
            let level = s.level();
            let li = levels.binary_search(&level).map_err(|_| {
                DataError::Schema(format!(
                    "sample ({}, {}) has budget {level} outside the grid",
                    s.query_id, s.model_id
                ))
            })?;
            let cell = &mut cells[(qi * pool.len() + mi) * n_levels + li];
            if cell.is_some() {
                return Err(DataError::Schema(format!(
                    "duplicate sample ({}, {}, {level})",
                    s.query_id, s.model_id
                )));
            }
            *cell = Some(si);
        }

        let ds = Self {
            pool,
            grid,
            queries,
            samples,
            embedding_dim,
            levels,
            cells,
            query_pos,
            model_pos,
        };
        if strict_coverage {
            let missing = ds.missing_keys();
            if !missing.is_empty() {
                return Err(DataError::Coverage { missing });
            }
        }
        Ok(ds)
    }

    pub fn pool(&self) -> &[ModelSpec] {
        &self.pool
    }

    pub fn grid(&self) -> &BudgetGrid {
        &self.grid
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn samples(&self) -> &[ResponseSample] {
        &self.samples
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    /// Levels in grid order; indexes used by [`Dataset::sample_at`].
    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn query_index(&self, query_id: &str) -> Option<usize> {
        self.query_pos.get(query_id).copied()
    }

    pub fn model_index(&self, model_id: &str) -> Option<usize> {
        self.model_pos.get(model_id).copied()
    }

    pub fn level_index(&self, level: Level) -> Option<usize> {
        self.levels.binary_search(&level).ok()
    }

    pub fn sample_at(&self, query: usize, model: usize, level: usize) -> Option<&ResponseSample> {
        let idx = (query * self.pool.len() + model) * self.levels.len() + level;
        self.cells[idx].map(|i| &self.samples[i])
    }

    pub fn sample(&self, query_id: &str, model_id: &str, level: Level) -> Option<&ResponseSample> {
        self.sample_at(
            self.query_index(query_id)?,
            self.model_index(model_id)?,
            self.level_index(level)?,
        )
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(Option::is_some)
    }

    /// Every (query, model, level) triple with no recorded sample.
    pub fn missing_keys(&self) -> Vec<SampleKey> {
        let mut missing = Vec::new();
        for (qi, q) in self.queries.iter().enumerate() {
            for (mi, m) in self.pool.iter().enumerate() {
                for (li, &level) in self.levels.iter().enumerate() {
                    if self.sample_at(qi, mi, li).is_none() {
                        missing.push(SampleKey {
                            query_id: q.query_id.clone(),
                            model_id: m.model_id.clone(),
                            level,
                        });
                    }
                }
            }
        }
        missing
    }

    pub fn require_complete(&self) -> Result<(), DataError> {
        let missing = self.missing_keys();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(DataError::Coverage { missing })
        }
    }

    /// Keeps only the queries selected by `keep`, carrying their samples along.
    pub fn filter_queries(&self, mut keep: impl FnMut(&Query) -> bool) -> Result<Self, DataError> {
        let queries: Vec<Query> = self.queries.iter().filter(|q| keep(q)).cloned().collect();
        let kept: std::collections::HashSet<&str> =
            queries.iter().map(|q| q.query_id.as_str()).collect();
        let samples = self
            .samples
            .iter()
            .filter(|s| kept.contains(s.query_id.as_str()))
            .cloned()
            .collect();
        Self::new(
            self.pool.clone(),
            self.grid.clone(),
            queries,
            samples,
            self.embedding_dim,
            false,
        )
    }

    /// Restricts the pool to `model_ids`, in the given order.
    pub fn select_models(&self, model_ids: &[&str]) -> Result<Self, DataError> {
        let pool = model_ids
            .iter()
            .map(|id| {
                self.model_index(id)
                    .map(|i| self.pool[i].clone())
                    .ok_or_else(|| DataError::Schema(format!("unknown model_id {id}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let samples = self
            .samples
            .iter()
            .filter(|s| model_ids.contains(&s.model_id.as_str()))
            .cloned()
            .collect();
        Self::new(
            pool,
            self.grid.clone(),
            self.queries.clone(),
            samples,
            self.embedding_dim,
            false,
        )
    }

    /// Restricts the grid to `anchors` (a subset of the current anchors);
    /// default-level samples are kept.
    pub fn restrict_anchors(&self, anchors: &[u32]) -> Result<Self, DataError> {
        if let Some(a) = anchors.iter().find(|a| !self.grid.anchors.contains(a)) {
            return Err(DataError::Schema(format!("anchor {a} is not in the grid")));
        }
        let grid = BudgetGrid::new(anchors.to_vec(), self.grid.default_cap)?;
        let samples = self
            .samples
            .iter()
            .filter(|s| grid.contains(s.level()))
            .cloned()
            .collect();
        Self::new(
            self.pool.clone(),
            grid,
            self.queries.clone(),
            samples,
            self.embedding_dim,
            false,
        )
    }

    /// Input token count recorded for a query (first sample in pool order).
    pub fn input_tokens(&self, query: usize) -> u64 {
        (0..self.pool.len())
            .flat_map(|m| (0..self.levels.len()).map(move |l| (m, l)))
            .find_map(|(m, l)| self.sample_at(query, m, l))
            .map_or(0, |s| s.input_tokens)
    }
}

fn checked_quality(q: f64) -> Result<f64, String> {
    if !q.is_finite() {
        return Err(format!("quality {q} is not finite"));
    }
    if q < -QUALITY_CLAMP_TOLERANCE || q > 1.0 + QUALITY_CLAMP_TOLERANCE {
        return Err(format!("quality out of [0,1]: {q}"));
    }
    Ok(q.clamp(0.0, 1.0))
}
