//! Gaussian naive Bayes.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{num, Hyperparameters, TrainingMeta};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianNbModel {
    /// Log priors of class 0 and class 1.
    pub log_prior: [f64; 2],
    pub means: [Vec<f64>; 2],
    /// Maximum-likelihood variances, floored.
    pub variances: [Vec<f64>; 2],
}

impl GaussianNbModel {
    fn log_joint(&self, row: &[f64], class: usize) -> f64 {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        self.log_prior[class]
            + row
                .iter()
                .zip(&self.means[class])
                .zip(&self.variances[class])
                .map(|((x, m), v)| -0.5 * (ln_2pi + v.ln() + (x - m) * (x - m) / v))
                .sum::<f64>()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let (l0, l1) = (self.log_joint(row, 0), self.log_joint(row, 1));
        let hi = l0.max(l1);
        let (e0, e1) = ((l0 - hi).exp(), (l1 - hi).exp());
        e1 / (e0 + e1)
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|r| self.predict_row(&r.to_vec()))
            .collect()
    }
}

pub fn train(x: ArrayView2<'_, f64>, y: &[u8], var_floor: f64) -> GaussianNbModel {
    let d = x.ncols();
    let mut means = [vec![0.0; d], vec![0.0; d]];
    let mut variances = [vec![0.0; d], vec![0.0; d]];
    let mut counts = [0usize; 2];
    for (r, &c) in x.rows().into_iter().zip(y) {
        let c = usize::from(c);
        counts[c] += 1;
        for (m, v) in means[c].iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    for c in 0..2 {
        means[c].iter_mut().for_each(|m| *m /= counts[c] as f64);
    }
    for (r, &c) in x.rows().into_iter().zip(y) {
        let c = usize::from(c);
        for j in 0..d {
            let e = r[j] - means[c][j];
            variances[c][j] += e * e;
        }
    }
    for c in 0..2 {
        variances[c]
            .iter_mut()
            .for_each(|v| *v = (*v / counts[c] as f64).max(var_floor));
    }
    let n = y.len() as f64;
    GaussianNbModel {
        log_prior: [(counts[0] as f64 / n).ln(), (counts[1] as f64 / n).ln()],
        means,
        variances,
    }
}

pub(crate) fn fit(h: &Hyperparameters, x: ArrayView2<'_, f64>, y: &[u8], seed: u64) -> Result<(GaussianNbModel, TrainingMeta)> {
    let model = train(x, y, num(h, "var_floor"));
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
