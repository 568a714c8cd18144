//! `rrmodel/1` checkpoints.
//!
//! Layout:
//!
//! ```text
//! b"rrmodel/1\n"
//! u64 little-endian  header length in bytes
//! header             UTF-8 JSON: pool, grid, embedding_dim, layer shapes per head, training_meta
//! tensors            f64 little-endian; per head, per layer: weights (input x output, row-major), then bias
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bank::{RouterModel, TrainingMeta};
use super::mlp::{Dense, MlpHead};
use super::PredictorError;
use crate::data::{BudgetGrid, ModelSpec};
use crate::linalg::Matrix;

pub const CHECKPOINT_FORMAT: &str = "rrmodel/1";

#[derive(Serialize, Deserialize)]
struct HeadShape {
    model_id: String,
    budget: u32,
    is_default: bool,
    /// (rows, cols) of each layer's weight matrix.
    layers: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    pool: Vec<ModelSpec>,
    grid: BudgetGrid,
    embedding_dim: usize,
    heads: Vec<HeadShape>,
    training_meta: TrainingMeta,
}

fn bad(msg: impl Into<String>) -> PredictorError {
    PredictorError::Checkpoint(msg.into())
}

pub fn checkpoint_bytes(rm: &RouterModel) -> Vec<u8> {
    let mut shapes = Vec::with_capacity(rm.heads.len());
    for (mi, m) in rm.pool.iter().enumerate() {
        for (li, level) in rm.levels.iter().enumerate() {
            let head = &rm.heads[mi * rm.levels.len() + li];
            shapes.push(HeadShape {
                model_id: m.model_id.clone(),
                budget: level.budget,
                is_default: level.is_default,
                layers: head
                    .layers()
                    .iter()
                    .map(|l| (l.weights.rows(), l.weights.cols()))
                    .collect(),
            });
        }
    }
    let header = Header {
        format: CHECKPOINT_FORMAT.to_string(),
        pool: rm.pool.clone(),
        grid: rm.grid.clone(),
        embedding_dim: rm.embedding_dim,
        heads: shapes,
        training_meta: rm.meta.clone(),
    };
    let json = serde_json::to_vec(&header).expect("checkpoint header serializes");

    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_FORMAT.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for head in &rm.heads {
        for layer in head.layers() {
            for v in layer.weights.as_slice().iter().chain(&layer.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<RouterModel, PredictorError> {
    let magic_len = CHECKPOINT_FORMAT.len() + 1;
    if bytes.len() < magic_len + 8
        || &bytes[..CHECKPOINT_FORMAT.len()] != CHECKPOINT_FORMAT.as_bytes()
        || bytes[CHECKPOINT_FORMAT.len()] != b'\n'
    {
        return Err(bad(format!("not a {CHECKPOINT_FORMAT} file")));
    }
    let mut rest = &bytes[magic_len..];
    let header_len = u64::from_le_bytes(rest[..8].try_into().unwrap()) as usize;
    rest = &rest[8..];
    if rest.len() < header_len {
        return Err(bad("truncated header"));
    }
    let header: Header =
        serde_json::from_slice(&rest[..header_len]).map_err(|e| bad(format!("header: {e}")))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(bad(format!("unsupported format tag {}", header.format)));
    }
    rest = &rest[header_len..];

    let mut floats = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    if rest.len() % 8 != 0 {
        return Err(bad("tensor section is not a whole number of f64 values"));
    }
    let levels = header.grid.levels();
    let mut heads = Vec::with_capacity(header.heads.len());
    for (i, shape) in header.heads.iter().enumerate() {
        let (mi, li) = (i / levels.len().max(1), i % levels.len().max(1));
        let expected_model = header.pool.get(mi).map(|m| m.model_id.as_str());
        let level = levels[li];
        if expected_model != Some(shape.model_id.as_str())
            || shape.budget != level.budget
            || shape.is_default != level.is_default
        {
            return Err(bad(format!(
                "head {i} ({}, {}) is out of pool/grid order",
                shape.model_id, shape.budget
            )));
        }
        let mut layers = Vec::with_capacity(shape.layers.len());
        for &(rows, cols) in &shape.layers {
            let weights: Vec<f64> = floats.by_ref().take(rows * cols).collect();
            let bias: Vec<f64> = floats.by_ref().take(cols).collect();
            if weights.len() != rows * cols || bias.len() != cols {
                return Err(bad("truncated tensor section"));
            }
            layers.push(Dense {
                weights: Matrix::from_vec(rows, cols, weights),
                bias,
            });
        }
        let chained = layers.windows(2).all(|w| w[0].output_dim() == w[1].input_dim());
        if layers.is_empty() || !chained || layers.last().unwrap().output_dim() != 1 {
            return Err(bad(format!("head {i} has inconsistent layer shapes")));
        }
        heads.push(MlpHead::from_layers(layers));
    }
    if floats.next().is_some() {
        return Err(bad("trailing data after tensors"));
    }
    RouterModel::from_parts(
        header.pool,
        header.grid,
        header.embedding_dim,
        heads,
        header.training_meta,
    )
}

pub fn save_checkpoint(rm: &RouterModel, path: impl AsRef<Path>) -> Result<(), PredictorError> {
    let path = path.as_ref();
    fs::write(path, checkpoint_bytes(rm)).map_err(|source| PredictorError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<RouterModel, PredictorError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| PredictorError::Io {
        path: path.display().to_string(),
        source,
    })?;
    checkpoint_from_bytes(&bytes)
}
