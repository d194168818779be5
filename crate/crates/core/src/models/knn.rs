//! k-nearest-neighbour voting.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{contiguous, num, text, Hyperparameters, TrainingMeta};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    Manhattan,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    /// Weight `1 / (distance + 1e-12)`.
    Distance,
}

/// Stores the training set; `k` is capped at the number of stored rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub metric: Metric,
    pub weighting: Weighting,
    pub x: Array2<f64>,
    pub y: Vec<u8>,
}

impl KnnModel {
    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.metric {
            Metric::Euclidean => a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt(),
            Metric::Manhattan => a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum(),
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let d = self.x.ncols();
        let data = self.x.as_slice().expect("standard layout");
        let mut dist: Vec<(f64, usize)> = (0..self.y.len())
            .map(|i| (self.distance(row, &data[i * d..(i + 1) * d]), i))
            .collect();
        let k = self.k.min(dist.len());
        // Ties on distance go to the earlier training row.
        let by = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, by);
        }
        let near = &mut dist[..k];
        near.sort_by(by);
        let (mut num, mut den) = (0.0, 0.0);
        for &(dst, i) in near.iter() {
            let w = match self.weighting {
                Weighting::Uniform => 1.0,
                Weighting::Distance => 1.0 / (dst + 1e-12),
            };
            num += w * f64::from(self.y[i]);
            den += w;
        }
        num / den
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let x = contiguous(x);
        x.rows().into_iter().map(|r| self.predict_row(r.to_slice().expect("contiguous row"))).collect()
    }
}

pub(crate) fn fit(h: &Hyperparameters, x: ArrayView2<'_, f64>, y: &[u8], seed: u64) -> Result<(KnnModel, TrainingMeta)> {
    let model = KnnModel {
        k: num(h, "k") as usize,
        metric: if text(h, "metric") == "manhattan" { Metric::Manhattan } else { Metric::Euclidean },
        weighting: if text(h, "weighting") == "distance" { Weighting::Distance } else { Weighting::Uniform },
        x: contiguous(x),
        y: y.to_vec(),
    };
    let meta = TrainingMeta {
        n: x.nrows(),
        d: x.ncols(),
        seed,
        converged: true,
        iterations: 0,
        final_loss: 0.0,
        loss_history: Vec::new(),
    };
    Ok((model, meta))
}
