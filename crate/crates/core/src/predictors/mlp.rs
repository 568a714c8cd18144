//! Fully connected quality head: rectifier hidden layers and a logistic
//! output, trained on squared error with Adam.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{gemm, sparse_affine, Matrix, Trans};

/// Hidden widths of every quality head unless configured otherwise.
pub const DEFAULT_HIDDEN: [usize; 3] = [256, 128, 64];

/// One affine layer; `weights` is `in x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Matrix::zeros(input, output),
            bias: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }

    fn slices(&self) -> [&[f64]; 2] {
        [self.weights.as_slice(), &self.bias]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 2] {
        [self.weights.as_mut_slice(), &mut self.bias]
    }
}

fn relu_in_place(xs: &mut [f64]) {
    for x in xs {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Parameters of one head. The last layer has a single output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpHead {
    layers: Vec<Dense>,
}

/// Gradient of a loss with respect to every parameter of an [`MlpHead`],
/// laid out exactly like the head.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.slices().into_iter().flatten().copied())
            .collect()
    }
}

fn layer_dims(input_dim: usize, hidden: &[usize]) -> Vec<(usize, usize)> {
    let mut dims = Vec::with_capacity(hidden.len() + 1);
    let mut prev = input_dim;
    for &h in hidden.iter().chain(std::iter::once(&1)) {
        dims.push((prev, h));
        prev = h;
    }
    dims
}

impl MlpHead {
    pub fn from_layers(layers: Vec<Dense>) -> Self {
        assert!(!layers.is_empty(), "head needs at least one layer");
        assert_eq!(layers.last().unwrap().output_dim(), 1, "head has one output");
        for w in layers.windows(2) {
            assert_eq!(w[0].output_dim(), w[1].input_dim(), "layer shapes chain");
        }
        Self { layers }
    }

    /// All weights and biases zero; predicts exactly 0.5 everywhere.
    pub fn zeros(input_dim: usize, hidden: &[usize]) -> Self {
        Self::from_layers(
            layer_dims(input_dim, hidden)
                .into_iter()
                .map(|(i, o)| Dense::zeros(i, o))
                .collect(),
        )
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))` drawn layer by
    /// layer in row-major order; biases zero.
    pub fn init_uniform<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let layers = layer_dims(input_dim, hidden)
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..=limit));
                Dense {
                    weights,
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn hidden(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(Dense::output_dim)
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Mutable view of parameter `i` in flat order (layer by layer, weights then bias).
    pub fn param_mut(&mut self, mut i: usize) -> &mut f64 {
        for layer in &mut self.layers {
            for s in layer.slices_mut() {
                if i < s.len() {
                    return &mut s[i];
                }
                i -= s.len();
            }
        }
        panic!("parameter index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.slices().iter().all(|s| s.iter().all(|x| x.is_finite())))
    }

    /// Pre-sigmoid output for one input.
    pub fn logit(&self, x: &[f64]) -> f64 {
        let mut a = x.to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            sparse_affine(&layer.weights, &a, &layer.bias, &mut z);
            if i < last {
                relu_in_place(&mut z);
            }
            std::mem::swap(&mut a, &mut z);
        }
        a[0]
    }

    /// Predicted quality in (0, 1).
    pub fn forward(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Post-activation outputs of every layer for a batch (rows are samples).
    /// The final entry holds sigmoid outputs.
    fn activations(&self, x: &Matrix) -> Vec<Matrix> {
        let n = x.rows();
        let last = self.layers.len() - 1;
        let mut acts: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let input = if i == 0 { x } else { &acts[i - 1] };
            let mut z = Matrix::zeros(n, layer.output_dim());
            if n == 1 {
                // Same kernel as `logit`, so single-sample gradients agree with `forward` exactly.
                let mut row = Vec::with_capacity(layer.output_dim());
                sparse_affine(&layer.weights, input.row(0), &layer.bias, &mut row);
                z.row_mut(0).copy_from_slice(&row);
            } else {
                for r in 0..n {
                    z.row_mut(r).copy_from_slice(&layer.bias);
                }
                gemm(1.0, input, Trans::N, &layer.weights, Trans::N, 1.0, &mut z);
            }
            if i < last {
                relu_in_place(z.as_mut_slice());
            } else {
                z.as_mut_slice().iter_mut().for_each(|v| *v = sigmoid(*v));
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward_batch(&self, x: &Matrix) -> Vec<f64> {
        self.activations(x).pop().expect("at least one layer").into_vec()
    }

    /// Mean squared error over the batch and its exact gradient.
    pub fn batch_gradient(&self, x: &Matrix, targets: &[f64]) -> (f64, Gradients) {
        let n = x.rows();
        assert_eq!(targets.len(), n, "one target per row");
        assert!(n > 0, "empty batch");
        let acts = self.activations(x);
        let preds = acts.last().unwrap().as_slice();

        let mut loss = 0.0;
        let mut delta = Matrix::zeros(n, 1);
        for (i, (&p, &y)) in preds.iter().zip(targets).enumerate() {
            let r = p - y;
            loss += r * r;
            delta.set(i, 0, 2.0 * r * p * (1.0 - p) / n as f64);
        }
        loss /= n as f64;

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = if l == 0 { x } else { &acts[l - 1] };
            let mut g = Dense::zeros(layer.input_dim(), layer.output_dim());
            gemm(1.0, input, Trans::T, &delta, Trans::N, 0.0, &mut g.weights);
            for r in 0..n {
                for (b, d) in g.bias.iter_mut().zip(delta.row(r)) {
                    *b += d;
                }
            }
            if l > 0 {
                let mut upstream = Matrix::zeros(n, layer.input_dim());
                gemm(1.0, &delta, Trans::N, &layer.weights, Trans::T, 0.0, &mut upstream);
                for (u, a) in upstream.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    if *a <= 0.0 {
                        *u = 0.0;
                    }
                }
                delta = upstream;
            }
            grads.push(g);
        }
        grads.reverse();
        (loss, Gradients { layers: grads })
    }
}

/// Inference copy of a head in single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactHead {
    // (in x out weights, bias) per layer
    layers: Vec<(usize, Vec<f32>, Vec<f32>)>,
}

impl CompactHead {
    pub fn new(head: &MlpHead) -> Self {
        let narrow = |xs: &[f64]| xs.iter().map(|&v| v as f32).collect();
        Self {
            layers: head
                .layers
                .iter()
                .map(|l| (l.output_dim(), narrow(l.weights.as_slice()), narrow(&l.bias)))
                .collect(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut a: Vec<f32> = x.iter().map(|&v| v as f32).collect();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (i, (out, w, bias)) in self.layers.iter().enumerate() {
            assert_eq!(w.len(), a.len() * out);
            z.clear();
            z.extend_from_slice(bias);
            for (row, &ai) in w.chunks_exact(*out).zip(&a) {
                if ai != 0.0 {
                    for (zj, &wj) in z.iter_mut().zip(row) {
                        *zj += ai * wj;
                    }
                }
            }
            if i < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut a, &mut z);
        }
        sigmoid(a[0] as f64)
    }
}

/// Exact gradient of `(prediction - target)^2` for a single input.
pub fn mlp_gradient(head: &MlpHead, x: &[f64], target: f64) -> Gradients {
    let batch = Matrix::from_vec(1, x.len(), x.to_vec());
    head.batch_gradient(&batch, &[target]).1
}

/// Adaptive-moment optimizer state for one head.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(head: &MlpHead, lr: f64) -> Self {
        let shapes: Vec<usize> = head
            .layers
            .iter()
            .flat_map(|l| l.slices().map(<[f64]>::len))
            .collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn update(&mut self, head: &mut MlpHead, grads: &Gradients) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let params = head.layers.iter_mut().flat_map(Dense::slices_mut);
        let gs = grads.layers.iter().flat_map(Dense::slices);
        for (((p, g), m), v) in params.zip(gs).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}
