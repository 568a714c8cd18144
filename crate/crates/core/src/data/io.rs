use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Serialize, Serializer};

use super::{BudgetGrid, DataError, Dataset, ModelSpec, Query, ResponseSample};

/// Significant digits kept when writing floats.
const FLOAT_DIGITS: usize = 9;

/// Rounds to [`FLOAT_DIGITS`] significant digits; serde_json then prints the
/// shortest representation of the rounded value.
pub(crate) fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", FLOAT_DIGITS - 1, x).parse().unwrap_or(x)
}

pub(crate) fn canonical_f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round_sig(*x))
}

pub(crate) fn canonical_f64_vec<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(xs.iter().map(|&x| round_sig(x)))
}

/// File locations inside a dataset directory.
#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub pool: PathBuf,
    pub grid: PathBuf,
    pub queries: PathBuf,
    pub samples: PathBuf,
}

impl DatasetPaths {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            pool: dir.join("pool.json"),
            grid: dir.join("grid.json"),
            queries: dir.join("queries.jsonl"),
            samples: dir.join("samples.jsonl"),
        }
    }
}

fn read(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn classify(file: &Path, line: usize, err: serde_json::Error) -> DataError {
    use serde_json::error::Category;
    let file = file.display().to_string();
    match err.classify() {
        Category::Data => DataError::Schema(format!("{file}:{line}: {err}")),
        _ => DataError::Parse {
            file,
            line,
            message: err.to_string(),
        },
    }
}

fn parse_json<T: DeserializeOwned>(path: &Path) -> Result<T, DataError> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| {
        let line = e.line();
        classify(path, line, e)
    })
}

fn parse_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DataError> {
    let text = read(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| classify(path, i + 1, e)))
        .collect()
}

/// Loads the four dataset files from `dir`. The embedding dimension is taken
/// from the first query; every other query must match it.
pub fn load_dataset(dir: impl AsRef<Path>, strict_coverage: bool) -> Result<Dataset, DataError> {
    load_from(&DatasetPaths::in_dir(dir), strict_coverage)
}

impl DatasetPaths {
    pub fn load(&self, strict_coverage: bool) -> Result<Dataset, DataError> {
        load_from(self, strict_coverage)
    }
}

fn load_from(paths: &DatasetPaths, strict_coverage: bool) -> Result<Dataset, DataError> {
    let pool: Vec<ModelSpec> = parse_json(&paths.pool)?;
    let grid: BudgetGrid = parse_json(&paths.grid)?;
    let queries: Vec<Query> = parse_jsonl(&paths.queries)?;
    let samples: Vec<ResponseSample> = parse_jsonl(&paths.samples)?;
    let dim = queries
        .first()
        .map(|q| q.embedding.len())
        .ok_or_else(|| DataError::Schema(format!("{} has no queries", paths.queries.display())))?;
    Dataset::new(pool, grid, queries, samples, dim, strict_coverage)
}

fn write(path: &Path, text: &str) -> Result<(), DataError> {
    fs::write(path, text).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn jsonl<T: Serialize>(rows: &[T]) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row).expect("dataset rows serialize"));
        out.push('\n');
    }
    out
}

/// Writes the canonical form of `ds` into `dir` (created if needed).
pub fn save_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<(), DataError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| DataError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let paths = DatasetPaths::in_dir(dir);
    write(&paths.pool, &pretty(ds.pool()))?;
    write(&paths.grid, &pretty(ds.grid()))?;
    write(&paths.queries, &jsonl(ds.queries()))?;
    write(&paths.samples, &jsonl(ds.samples()))?;
    Ok(())
}

fn pretty<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("dataset headers serialize");
    s.push('\n');
    s
}
