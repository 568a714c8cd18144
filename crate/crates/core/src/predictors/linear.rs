use super::bank::cell_data;
use super::{unknown_cell, PredictorError, QualityPredictor};
use crate::data::{BudgetGrid, Dataset, Level, ModelSpec};
use crate::linalg::{dot, gemm, Cholesky, Matrix, Trans};

pub const DEFAULT_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
struct LinearCell {
    weights: Vec<f64>,
    bias: f64,
}

/// Ridge regression per (model, level) cell. The bias is not penalized.
#[derive(Debug, Clone)]
pub struct LinearPredictor {
    pool: Vec<ModelSpec>,
    grid: BudgetGrid,
    levels: Vec<Level>,
    embedding_dim: usize,
    cells: Vec<LinearCell>,
}

/// Solves `(Xc'Xc + ridge I) w = Xc'yc` on centered data, then recovers the
/// bias from the means.
fn fit_cell(xs: &Matrix, ys: &[f64], ridge: f64) -> Option<LinearCell> {
    let (n, d) = (xs.rows(), xs.cols());
    let nf = n as f64;
    let x_mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| xs.get(i, j)).sum::<f64>() / nf).collect();
    let y_mean = ys.iter().sum::<f64>() / nf;
    let centered = Matrix::from_fn(n, d, |i, j| xs.get(i, j) - x_mean[j]);

    let mut gram = Matrix::zeros(d, d);
    gemm(1.0, &centered, Trans::T, &centered, Trans::N, 0.0, &mut gram);
    for j in 0..d {
        gram.set(j, j, gram.get(j, j) + ridge);
    }
    let rhs: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| centered.get(i, j) * (ys[i] - y_mean)).sum())
        .collect();
    let weights = Cholesky::factor(&gram).ok()?.solve(&rhs);
    let bias = y_mean - dot(&weights, &x_mean);
    Some(LinearCell { weights, bias })
}

pub fn linear_fit(train: &Dataset, ridge: f64) -> Result<LinearPredictor, PredictorError> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(PredictorError::Config("ridge must be finite and >= 0".into()));
    }
    let levels = train.levels().to_vec();
    let mut cells = Vec::with_capacity(train.pool().len() * levels.len());
    for (mi, m) in train.pool().iter().enumerate() {
        for (li, &level) in levels.iter().enumerate() {
            let (xs, ys) = cell_data(train, mi, li);
            if ys.is_empty() {
                return Err(PredictorError::EmptyCell {
                    model_id: m.model_id.clone(),
                    level,
                });
            }
            let cell = fit_cell(&xs, &ys, ridge).ok_or_else(|| PredictorError::Singular {
                model_id: m.model_id.clone(),
                level,
            })?;
            cells.push(cell);
        }
    }
    Ok(LinearPredictor {
        pool: train.pool().to_vec(),
        grid: train.grid().clone(),
        levels,
        embedding_dim: train.embedding_dim(),
        cells,
    })
}

impl LinearPredictor {
    /// Weights and bias of one cell.
    pub fn coefficients(&self, model: usize, level: Level) -> Option<(&[f64], f64)> {
        let li = self.levels.binary_search(&level).ok()?;
        let cell = self.cells.get(model * self.levels.len() + li)?;
        (model < self.pool.len()).then_some((cell.weights.as_slice(), cell.bias))
    }
}

impl QualityPredictor for LinearPredictor {
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
        let (w, b) = self
            .coefficients(model, level)
            .ok_or_else(|| unknown_cell(&self.pool, model, level))?;
        Ok(dot(w, embedding) + b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Query, ResponseSample};

    fn dataset(points: &[(Vec<f64>, f64)]) -> Dataset {
        let pool = vec![ModelSpec::new("m", 0.0, 1.0)];
        let grid = BudgetGrid::new(vec![10], 10).unwrap();
        let queries: Vec<Query> = points
            .iter()
            .enumerate()
            .map(|(i, (e, _))| Query::new(format!("q{i}"), e.clone()))
            .collect();
        let mut samples = Vec::new();
        for (i, (_, y)) in points.iter().enumerate() {
            for l in grid.levels() {
                samples.push(ResponseSample {
                    query_id: format!("q{i}"),
                    model_id: "m".into(),
                    budget: l.budget,
                    is_default: l.is_default,
                    quality: *y,
                    actual_output_tokens: 1,
                    input_tokens: 1,
                });
            }
        }
        Dataset::new(pool, grid, queries, samples, points[0].0.len(), true).unwrap()
    }

    #[test]
    fn three_point_line() {
        // Targets {0, 1, 2} lie outside the quality range, so fit the cell directly.
        let xs = Matrix::from_vec(3, 1, vec![0.0, 1.0, 2.0]);
        let cell = fit_cell(&xs, &[0.0, 1.0, 2.0], 0.0).unwrap();
        assert!((cell.weights[0] - 1.0).abs() < 1e-12);
        assert!(cell.bias.abs() < 1e-12);

        let exact = dataset(&[(vec![0.0], 0.0), (vec![1.0], 0.5), (vec![2.0], 1.0)]);
        let p = linear_fit(&exact, 0.0).unwrap();
        let (w, b) = p.coefficients(0, Level::anchor(10)).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12 && b.abs() < 1e-12);
    }

    #[test]
    fn realizable_targets_are_interpolated() {
        let w_true = [0.1, -0.05, 0.2];
        let points: Vec<(Vec<f64>, f64)> = (0..12)
            .map(|i| {
                let e = vec![(i as f64).sin(), (i as f64 * 0.7).cos(), i as f64 / 12.0];
                let y = 0.4 + dot(&w_true, &e);
                (e, y)
            })
            .collect();
        let d = dataset(&points);
        let p = linear_fit(&d, 0.0).unwrap();
        for (e, y) in &points {
            let r = p.predict(e, 0, Level::anchor(10)).unwrap() - y;
            assert!(r.abs() < 1e-8, "{r}");
        }
    }

    #[test]
    fn huge_ridge_collapses_to_the_mean() {
        let d = dataset(&[(vec![0.0, 1.0], 0.1), (vec![1.0, 3.0], 0.6), (vec![2.0, -1.0], 0.8)]);
        let p = linear_fit(&d, 1e12).unwrap();
        let (w, b) = p.coefficients(0, Level::anchor(10)).unwrap();
        assert!(w.iter().all(|v| v.abs() < 1e-9));
        assert!((b - 0.5).abs() < 1e-9);
    }

    #[test]
    fn singular_without_ridge_is_reported() {
        let d = dataset(&[(vec![1.0, 2.0], 0.1), (vec![2.0, 4.0], 0.2), (vec![3.0, 6.0], 0.3)]);
        assert!(matches!(linear_fit(&d, 0.0), Err(PredictorError::Singular { .. })));
        assert!(linear_fit(&d, DEFAULT_RIDGE).is_ok());
    }
}
