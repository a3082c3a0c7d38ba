//! Multinomial logistic regression and a one-hidden-layer perceptron over a
//! flat parameter vector, trained with mini-batch SGD on cross-entropy.

use rand::seq::SliceRandom;
use rand::RngCore;

use super::Dataset;
use crate::{Error, ModelVector, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// `W: classes × features`, `b: classes`.
    Logistic { features: usize, classes: usize },
    /// `W1: hidden × features`, `b1`, `W2: classes × hidden`, `b2`; tanh units.
    Mlp { features: usize, hidden: usize, classes: usize },
}

impl Architecture {
    pub fn num_params(&self) -> usize {
        match *self {
            Architecture::Logistic { features, classes } => classes * features + classes,
            Architecture::Mlp { features, hidden, classes } => {
                hidden * features + hidden + classes * hidden + classes
            }
        }
    }

    pub fn features(&self) -> usize {
        match *self {
            Architecture::Logistic { features, .. } | Architecture::Mlp { features, .. } => features,
        }
    }

    pub fn classes(&self) -> usize {
        match *self {
            Architecture::Logistic { classes, .. } | Architecture::Mlp { classes, .. } => classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub params: ModelVector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for SgdOptions {
    fn default() -> Self {
        Self { epochs: 1, learning_rate: 0.1, batch_size: 32 }
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

impl Model {
    pub fn new(arch: Architecture, params: ModelVector) -> Result<Self> {
        if params.len() != arch.num_params() {
            return Err(Error::invalid(format!(
                "{} parameters for an architecture of {}",
                params.len(),
                arch.num_params()
            )));
        }
        Ok(Self { arch, params })
    }

    pub fn zeros(arch: Architecture) -> Self {
        Self { arch, params: ModelVector::zeros(arch.num_params()) }
    }

    fn check_shape(&self, data: &Dataset) -> Result<()> {
        if data.num_features() != self.arch.features() || data.num_classes() != self.arch.classes() {
            return Err(Error::invalid("dataset shape does not match the model"));
        }
        Ok(())
    }

    /// Class probabilities for one input.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.arch.classes()];
        self.forward(x, &mut out, &mut Vec::new());
        out
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let p = self.predict_proba(x);
        p.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    }

    /// Writes probabilities into `probs` and hidden activations into `hidden`.
    fn forward(&self, x: &[f64], probs: &mut [f64], hidden: &mut Vec<f64>) {
        let p = &self.params;
        match self.arch {
            Architecture::Logistic { features, classes } => {
                let bias = &p[classes * features..];
                for c in 0..classes {
                    let row = &p[c * features..(c + 1) * features];
                    probs[c] = bias[c] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                }
            }
            Architecture::Mlp { features, hidden: h, classes } => {
                let (w1, rest) = p.split_at(h * features);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(classes * h);
                hidden.clear();
                hidden.extend((0..h).map(|j| {
                    let row = &w1[j * features..(j + 1) * features];
                    (b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).tanh()
                }));
                for c in 0..classes {
                    let row = &w2[c * h..(c + 1) * h];
                    probs[c] = b2[c] + row.iter().zip(hidden.iter()).map(|(w, v)| w * v).sum::<f64>();
                }
            }
        }
        softmax_in_place(probs);
    }

    /// Mean cross-entropy over `indices` and its gradient.
    pub fn loss_and_gradient(&self, data: &Dataset, indices: &[usize]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let classes = self.arch.classes();
        let mut probs = vec![0.0; classes];
        let mut hidden = Vec::new();
        let mut loss = 0.0;
        for &i in indices {
            let (x, y) = data.sample(i);
            self.forward(x, &mut probs, &mut hidden);
            loss -= probs[y as usize].max(f64::MIN_POSITIVE).ln();
            // dL/dz = p - onehot(y)
            probs[y as usize] -= 1.0;
            match self.arch {
                Architecture::Logistic { features, classes } => {
                    for c in 0..classes {
                        let g = probs[c];
                        for (gw, v) in grad[c * features..(c + 1) * features].iter_mut().zip(x) {
                            *gw += g * v;
                        }
                        grad[classes * features + c] += g;
                    }
                }
                Architecture::Mlp { features, hidden: h, classes } => {
                    let w2_off = h * features + h;
                    let b2_off = w2_off + classes * h;
                    let mut dh = vec![0.0; h];
                    for c in 0..classes {
                        let g = probs[c];
                        for j in 0..h {
                            grad[w2_off + c * h + j] += g * hidden[j];
                            dh[j] += g * self.params[w2_off + c * h + j];
                        }
                        grad[b2_off + c] += g;
                    }
                    for j in 0..h {
                        let da = dh[j] * (1.0 - hidden[j] * hidden[j]);
                        for (gw, v) in grad[j * features..(j + 1) * features].iter_mut().zip(x) {
                            *gw += da * v;
                        }
                        grad[h * features + j] += da;
                    }
                }
            }
        }
        let n = indices.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n, grad)
    }

    /// Mean cross-entropy over the whole dataset.
    pub fn loss(&self, data: &Dataset) -> f64 {
        let all: Vec<usize> = (0..data.len()).collect();
        let mut probs = vec![0.0; self.arch.classes()];
        let mut hidden = Vec::new();
        let mut loss = 0.0;
        for &i in &all {
            let (x, y) = data.sample(i);
            self.forward(x, &mut probs, &mut hidden);
            loss -= probs[y as usize].max(f64::MIN_POSITIVE).ln();
        }
        loss / data.len().max(1) as f64
    }
}

/// Local mini-batch SGD from `model`; returns `θ_new − θ_old`. An empty shard
/// yields a zero update.
pub fn sgd_local<R: RngCore + ?Sized>(
    model: &Model,
    shard: &Dataset,
    opts: &SgdOptions,
    rng: &mut R,
) -> Result<ModelVector> {
    if shard.is_empty() {
        return Ok(ModelVector::zeros(model.params.len()));
    }
    model.check_shape(shard)?;
    let mut local = model.clone();
    let mut order: Vec<usize> = (0..shard.len()).collect();
    let batch = opts.batch_size.max(1);
    for _ in 0..opts.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch) {
            let (_, grad) = local.loss_and_gradient(shard, chunk);
            for (p, g) in local.params.iter_mut().zip(&grad) {
                *p -= opts.learning_rate * g;
            }
        }
    }
    Ok(local.params.iter().zip(model.params.iter()).map(|(n, o)| n - o).collect::<Vec<_>>().into())
}

/// Fraction of samples whose argmax prediction equals the label.
pub fn evaluate(model: &Model, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    model.check_shape(data)?;
    let correct = (0..data.len())
        .filter(|&i| {
            let (x, y) = data.sample(i);
            model.predict(x) == y as usize
        })
        .count();
    Ok(correct as f64 / data.len() as f64)
}
