use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{Emotion, FeatureSequence};

/// One labelled training example. `weight` scales its loss contribution.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub features: &'a FeatureSequence,
    pub label: Emotion,
    pub weight: f64,
}

impl<'a> Example<'a> {
    pub fn new(features: &'a FeatureSequence, label: Emotion) -> Self {
        Example {
            features,
            label,
            weight: 1.0,
        }
    }
}

/// Contract for classifiers the staged trainer can drive.
///
/// Parameters live in one flat vector so the optimizer stays model-agnostic.
pub trait Model: Send + Sync {
    fn init(seed: u64, input_dim: usize, n_classes: usize) -> Self
    where
        Self: Sized;

    fn n_params(&self) -> usize {
        self.params().len()
    }

    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    /// Class probabilities for one clip.
    fn forward(&self, features: &FeatureSequence) -> Vec<f64>;

    /// Mean weighted cross-entropy over the batch (divided by the batch
    /// length) and its gradient with respect to `params()`.
    fn loss_and_gradients(&self, batch: &[Example<'_>]) -> (f64, Vec<f64>);

    /// Fits any non-trainable input preprocessing. Called once before training.
    fn prepare(&mut self, _train: &[&FeatureSequence]) {}

    fn predict(&self, features: &FeatureSequence) -> Emotion {
        let scores = self.forward(features);
        let best = scores
            .iter()
            .enumerate()
            .fold(0, |best, (i, &s)| if s > scores[best] { i } else { best });
        Emotion::from_index(best).expect("model emits six class scores")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// Mean/std pooling, one ReLU hidden layer, softmax output.
    Reference { hidden: usize },
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Reference { hidden: 128 }
    }
}

impl ModelConfig {
    pub fn build(&self, seed: u64, input_dim: usize) -> Box<dyn Model> {
        match *self {
            ModelConfig::Reference { hidden } => Box::new(ReferenceModel::with_hidden(
                seed,
                input_dim,
                Emotion::COUNT,
                hidden,
            )),
        }
    }
}

/// Per-clip mean and (population) standard deviation of every feature column.
pub fn pool_mean_std(seq: &FeatureSequence) -> Vec<f64> {
    let d = seq.dim();
    let t = seq.frames() as f64;
    let mut mean = vec![0.0; d];
    for row in seq.rows() {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= t);
    let mut var = vec![0.0; d];
    for row in seq.rows() {
        for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    mean.extend(var.into_iter().map(|v| (v / t).sqrt()));
    mean
}

/// Pooled-feature feed-forward classifier.
///
/// Layout of the flat parameter vector: `W1 (H x 2D)`, `b1 (H)`,
/// `W2 (C x H)`, `b2 (C)`, all row-major.
#[derive(Debug, Clone)]
pub struct ReferenceModel {
    input_dim: usize,
    hidden: usize,
    n_classes: usize,
    params: Vec<f64>,
    shift: Vec<f64>,
    scale: Vec<f64>,
}

impl ReferenceModel {
    pub fn with_hidden(seed: u64, input_dim: usize, n_classes: usize, hidden: usize) -> Self {
        let pooled = 2 * input_dim;
        let n = hidden * pooled + hidden + n_classes * hidden + n_classes;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; n];
        // He-uniform for the ReLU layer, Glorot-uniform for the output layer.
        let a1 = (6.0 / pooled as f64).sqrt();
        for w in &mut params[..hidden * pooled] {
            *w = rng.random_range(-a1..a1);
        }
        let w2_start = hidden * pooled + hidden;
        let a2 = (6.0 / (hidden + n_classes) as f64).sqrt();
        for w in &mut params[w2_start..w2_start + n_classes * hidden] {
            *w = rng.random_range(-a2..a2);
        }
        ReferenceModel {
            input_dim,
            hidden,
            n_classes,
            params,
            shift: vec![0.0; pooled],
            scale: vec![1.0; pooled],
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn pooled_dim(&self) -> usize {
        2 * self.input_dim
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let p = self.pooled_dim();
        let b1 = self.hidden * p;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.n_classes * self.hidden;
        (b1, w2, b2)
    }

    fn input(&self, seq: &FeatureSequence) -> Vec<f64> {
        assert_eq!(seq.dim(), self.input_dim, "feature dimension mismatch");
        let mut x = pool_mean_std(seq);
        for ((x, s), c) in x.iter_mut().zip(&self.shift).zip(&self.scale) {
            *x = (*x - s) * c;
        }
        x
    }

    /// Returns (hidden pre-activations, class probabilities).
    fn activations(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = self.pooled_dim();
        let (b1_off, w2_off, b2_off) = self.offsets();
        let w1 = &self.params[..b1_off];
        let b1 = &self.params[b1_off..w2_off];
        let w2 = &self.params[w2_off..b2_off];
        let b2 = &self.params[b2_off..];

        let pre: Vec<f64> = (0..self.hidden)
            .map(|j| b1[j] + dot(&w1[j * p..(j + 1) * p], x))
            .collect();
        let h: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
        let logits: Vec<f64> = (0..self.n_classes)
            .map(|c| b2[c] + dot(&w2[c * self.hidden..(c + 1) * self.hidden], &h))
            .collect();
        (pre, softmax(&logits))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

impl Model for ReferenceModel {
    fn init(seed: u64, input_dim: usize, n_classes: usize) -> Self {
        ReferenceModel::with_hidden(seed, input_dim, n_classes, 128)
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward(&self, features: &FeatureSequence) -> Vec<f64> {
        self.activations(&self.input(features)).1
    }

    fn loss_and_gradients(&self, batch: &[Example<'_>]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        if batch.is_empty() {
            return (0.0, grad);
        }
        let p = self.pooled_dim();
        let (b1_off, w2_off, b2_off) = self.offsets();
        let inv_n = 1.0 / batch.len() as f64;
        let mut loss = 0.0;

        for ex in batch {
            let x = self.input(ex.features);
            let (pre, probs) = self.activations(&x);
            let y = ex.label.index();
            let w = ex.weight * inv_n;
            loss += -w * probs[y].max(f64::MIN_POSITIVE).ln();
            if w == 0.0 {
                continue;
            }

            let dz: Vec<f64> = probs
                .iter()
                .enumerate()
                .map(|(c, &pc)| w * (pc - if c == y { 1.0 } else { 0.0 }))
                .collect();
            let mut dh = vec![0.0; self.hidden];
            for (c, &g) in dz.iter().enumerate() {
                grad[b2_off + c] += g;
                let row = w2_off + c * self.hidden;
                for j in 0..self.hidden {
                    let hj = pre[j].max(0.0);
                    grad[row + j] += g * hj;
                    dh[j] += g * self.params[row + j];
                }
            }
            for j in 0..self.hidden {
                if pre[j] <= 0.0 {
                    continue;
                }
                let g = dh[j];
                grad[b1_off + j] += g;
                let row = &mut grad[j * p..(j + 1) * p];
                for (gr, &xi) in row.iter_mut().zip(&x) {
                    *gr += g * xi;
                }
            }
        }
        (loss, grad)
    }

    /// Standardises pooled inputs with train-set column statistics.
    fn prepare(&mut self, train: &[&FeatureSequence]) {
        if train.is_empty() {
            return;
        }
        let p = self.pooled_dim();
        let pooled: Vec<Vec<f64>> = train.iter().map(|s| pool_mean_std(s)).collect();
        let n = pooled.len() as f64;
        for k in 0..p {
            let mean = pooled.iter().map(|v| v[k]).sum::<f64>() / n;
            let var = pooled.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / n;
            self.shift[k] = mean;
            self.scale[k] = if var > 1e-12 { 1.0 / var.sqrt() } else { 1.0 };
        }
    }
}
