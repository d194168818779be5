//! Random forest of CART trees on bootstrap samples.

use ndarray::ArrayView2;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{build_cart, CartParams, Tree};
use super::{contiguous, num, text, Hyperparameters, TrainingMeta};
use crate::error::Result;
use crate::rng::rng_for;

const TREE_STREAM: u64 = 0x7ee5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    All,
}

impl MaxFeatures {
    pub fn count(self, d: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (d as f64).sqrt().floor() as usize,
            MaxFeatures::Log2 => (d as f64).log2().floor() as usize,
            MaxFeatures::All => d,
        };
        k.clamp(1, d.max(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_estimators: 200,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
        }
    }
}

impl ForestParams {
    pub fn from_hyper(h: &Hyperparameters) -> Self {
        let depth = num(h, "max_depth") as usize;
        ForestParams {
            n_estimators: num(h, "n_estimators") as usize,
            max_depth: (depth > 0).then_some(depth),
            min_samples_leaf: num(h, "min_samples_leaf") as usize,
            max_features: match text(h, "max_features") {
                "log2" => MaxFeatures::Log2,
                "all" => MaxFeatures::All,
                _ => MaxFeatures::Sqrt,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    /// Normalized mean impurity decrease per feature; sums to 1 unless no
    /// tree split at all.
    pub feature_importances: Vec<f64>,
}

impl ForestModel {
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let x = contiguous(x);
        x.rows()
            .into_iter()
            .map(|r| {
                let r = r.to_slice().expect("contiguous row");
                self.trees.iter().map(|t| t.predict_row(r)).sum::<f64>() / self.trees.len() as f64
            })
            .collect()
    }
}

/// Trains the forest; trees are grown in parallel from per-tree seeds and
/// combined in tree order, so the result is independent of worker count.
pub fn train(x: ArrayView2<'_, f64>, y: &[u8], params: &ForestParams, seed: u64) -> ForestModel {
    let x = contiguous(x);
    let (n, d) = x.dim();
    let data = x.as_slice().expect("standard layout");
    let rows: Vec<&[f64]> = (0..n).map(|i| &data[i * d..(i + 1) * d]).collect();
    let cart = CartParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        max_features: params.max_features.count(d),
    };
    let fits: Vec<_> = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(seed, TREE_STREAM, t as u64);
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            build_cart(&rows, y, sample, &cart, &mut rng)
        })
        .collect();

    let mut importance = vec![0.0; d];
    for f in &fits {
        for (acc, v) in importance.iter_mut().zip(&f.impurity_decrease) {
            *acc += v;
        }
    }
    let total: f64 = importance.iter().sum();
    if total > 0.0 {
        importance.iter_mut().for_each(|v| *v /= total);
    }
    ForestModel {
        trees: fits.into_iter().map(|f| f.tree).collect(),
        feature_importances: importance,
    }
}

pub(crate) fn fit(h: &Hyperparameters, x: ArrayView2<'_, f64>, y: &[u8], seed: u64) -> Result<(ForestModel, TrainingMeta)> {
    let params = ForestParams::from_hyper(h);
    let model = train(x, y, &params, seed);
    let meta = TrainingMeta {
        n: x.nrows(),
        d: x.ncols(),
        seed,
        converged: true,
        iterations: params.n_estimators,
        final_loss: super::logit_loss(
            &model
                .predict_proba(x)
                .iter()
                .map(|p| {
                    let p = p.clamp(1e-15, 1.0 - 1e-15);
                    (p / (1.0 - p)).ln()
                })
                .collect::<Vec<_>>(),
            y,
        ),
        loss_history: Vec::new(),
    };
    Ok((model, meta))
}
