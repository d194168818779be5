//! One-hidden-layer network: ReLU hidden units, sigmoid output, inverted
//! dropout on the hidden layer during training, Adam on mean binary
//! cross-entropy.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::logistic::open_unit;
use super::{contiguous, num, sigmoid, softplus, Hyperparameters, TrainingMeta};
use crate::error::Result;
use crate::rng::{rng_for, Rng};

const INIT_STREAM: u64 = 0x1417;
const EPOCH_STREAM: u64 = 0xe90c;
const VALID_STREAM: u64 = 0x7a1d;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlpParams {
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables
    /// early stopping.
    pub patience: usize,
}

impl MlpParams {
    pub(crate) fn from_hyper(h: &Hyperparameters) -> Self {
        MlpParams {
            hidden_units: num(h, "hidden_units") as usize,
            learning_rate: num(h, "learning_rate"),
            batch_size: num(h, "batch_size") as usize,
            dropout_rate: num(h, "dropout_rate"),
            epochs: num(h, "epochs") as usize,
            patience: num(h, "patience") as usize,
        }
    }
}

/// Parameters flatten in the order `w1` (hidden × inputs, row-major), `b1`,
/// `w2`, `b2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub n_inputs: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl MlpModel {
    pub fn init(n_inputs: usize, hidden: usize, rng: &mut Rng) -> Self {
        let he = Normal::new(0.0, (2.0 / n_inputs.max(1) as f64).sqrt()).expect("positive sd");
        let out = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).expect("positive sd");
        MlpModel {
            n_inputs,
            hidden,
            w1: (0..hidden * n_inputs).map(|_| he.sample(rng)).collect(),
            b1: vec![0.0; hidden],
            w2: (0..hidden).map(|_| out.sample(rng)).collect(),
            b2: 0.0,
        }
    }

    pub fn n_params(&self) -> usize {
        self.hidden * (self.n_inputs + 2) + 1
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn set_flat(&mut self, v: &[f64]) {
        let (a, rest) = v.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.hidden);
        let (c, rest) = rest.split_at(self.hidden);
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2 = rest[0];
    }

    fn logit(&self, row: &[f64]) -> f64 {
        let d = self.n_inputs;
        let mut z = self.b2;
        for j in 0..self.hidden {
            let a = self.b1[j] + self.w1[j * d..(j + 1) * d].iter().zip(row).map(|(w, x)| w * x).sum::<f64>();
            if a > 0.0 {
                z += self.w2[j] * a;
            }
        }
        z
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let x = contiguous(x);
        x.rows()
            .into_iter()
            .map(|r| open_unit(sigmoid(self.logit(r.to_slice().expect("contiguous row")))))
            .collect()
    }

    /// Adds the gradient of the summed loss over `batch` into `grad` and
    /// returns the summed loss. `dropout` is `(rate, rng)` during training.
    fn accumulate(&self, rows: &[&[f64]], y: &[u8], batch: &[usize], mut dropout: Option<(f64, &mut Rng)>, grad: &mut [f64], act: &mut [f64]) -> f64 {
        let (d, h) = (self.n_inputs, self.hidden);
        let (g_w1, rest) = grad.split_at_mut(h * d);
        let (g_b1, rest) = rest.split_at_mut(h);
        let (g_w2, g_b2) = rest.split_at_mut(h);
        let mut loss = 0.0;
        for &i in batch {
            let row = rows[i];
            let mut z = self.b2;
            for j in 0..h {
                let a = self.b1[j] + self.w1[j * d..(j + 1) * d].iter().zip(row).map(|(w, x)| w * x).sum::<f64>();
                let mut r = a.max(0.0);
                if let Some((rate, rng)) = dropout.as_mut() {
                    if *rate > 0.0 {
                        r = if rng.random::<f64>() < *rate { 0.0 } else { r / (1.0 - *rate) };
                    }
                }
                // Post-dropout activation; zero means no gradient flows back.
                act[j] = r;
                z += self.w2[j] * r;
            }
            let t = f64::from(y[i]);
            loss += softplus(z) - t * z;
            let dz = sigmoid(z) - t;
            g_b2[0] += dz;
            for j in 0..h {
                g_w2[j] += dz * act[j];
                if act[j] > 0.0 {
                    let scale = match &dropout {
                        Some((rate, _)) if *rate > 0.0 => 1.0 / (1.0 - rate),
                        _ => 1.0,
                    };
                    let da = dz * self.w2[j] * scale;
                    g_b1[j] += da;
                    for (g, x) in g_w1[j * d..(j + 1) * d].iter_mut().zip(row) {
                        *g += da * x;
                    }
                }
            }
        }
        loss
    }

    /// Mean cross-entropy and its gradient over all rows, dropout off.
    pub fn loss_and_gradient(&self, x: ArrayView2<'_, f64>, y: &[u8]) -> (f64, Vec<f64>) {
        let x = contiguous(x);
        let rows = row_slices(&x);
        let all: Vec<usize> = (0..y.len()).collect();
        let mut grad = vec![0.0; self.n_params()];
        let mut act = vec![0.0; self.hidden];
        let loss = self.accumulate(&rows, y, &all, None, &mut grad, &mut act);
        let n = y.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n, grad)
    }

    fn mean_loss(&self, rows: &[&[f64]], y: &[u8], idx: &[usize]) -> f64 {
        let s: f64 = idx
            .iter()
            .map(|&i| {
                let z = self.logit(rows[i]);
                softplus(z) - f64::from(y[i]) * z
            })
            .sum();
        s / idx.len().max(1) as f64
    }
}

fn row_slices(x: &ndarray::Array2<f64>) -> Vec<&[f64]> {
    let d = x.ncols();
    let data = x.as_slice().expect("standard layout");
    (0..x.nrows()).map(|i| &data[i * d..(i + 1) * d]).collect()
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for k in 0..theta.len() {
            self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * grad[k];
            self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * grad[k] * grad[k];
            theta[k] -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Trains the network; returns the model and per-epoch mean training loss.
pub fn train(x: ArrayView2<'_, f64>, y: &[u8], p: &MlpParams, seed: u64) -> (MlpModel, Vec<f64>, usize) {
    let x = contiguous(x);
    let rows = row_slices(&x);
    let n = y.len();
    let mut model = MlpModel::init(x.ncols(), p.hidden_units, &mut rng_for(seed, INIT_STREAM, 0));

    let mut train_idx: Vec<usize> = (0..n).collect();
    let mut valid_idx = Vec::new();
    if p.patience > 0 && n >= 2 {
        train_idx.shuffle(&mut rng_for(seed, VALID_STREAM, 0));
        let n_valid = (n / 10).max(1);
        valid_idx = train_idx.split_off(n - n_valid);
        valid_idx.sort_unstable();
        train_idx.sort_unstable();
    }

    let mut theta = model.flat();
    let mut adam = Adam::new(theta.len(), p.learning_rate);
    let mut grad = vec![0.0; theta.len()];
    let mut act = vec![0.0; p.hidden_units];
    let mut history = Vec::with_capacity(p.epochs);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut stale = 0;
    let mut epochs_run = 0;

    for epoch in 0..p.epochs {
        let mut rng = rng_for(seed, EPOCH_STREAM, epoch as u64);
        let mut order = train_idx.clone();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(p.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            model.set_flat(&theta);
            total += model.accumulate(&rows, y, batch, Some((p.dropout_rate, &mut rng)), &mut grad, &mut act);
            let b = batch.len() as f64;
            grad.iter_mut().for_each(|g| *g /= b);
            adam.step(&mut theta, &grad);
        }
        history.push(total / order.len() as f64);
        epochs_run = epoch + 1;

        if !valid_idx.is_empty() {
            model.set_flat(&theta);
            let v = model.mean_loss(&rows, y, &valid_idx);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, theta.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= p.patience {
                    break;
                }
            }
        }
    }
    if let Some((_, t)) = best {
        theta = t;
    }
    model.set_flat(&theta);
    (model, history, epochs_run)
}

pub(crate) fn fit(h: &Hyperparameters, x: ArrayView2<'_, f64>, y: &[u8], seed: u64) -> Result<(MlpModel, TrainingMeta)> {
    let params = MlpParams::from_hyper(h);
    let (model, history, epochs) = train(x, y, &params, seed);
    let (final_loss, _) = model.loss_and_gradient(x, y);
    let meta = TrainingMeta {
        n: x.nrows(),
        d: x.ncols(),
        seed,
        converged: true,
        iterations: epochs,
        final_loss,
        loss_history: history,
    };
    Ok((model, meta))
}
