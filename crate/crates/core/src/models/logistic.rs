//! Penalized logistic regression with an unpenalized intercept.
//!
//! The objective is mean binary cross-entropy plus `(1/C)·‖w‖₁` or
//! `(1/(2C))·‖w‖²`. L2 is solved by damped Newton, L1 by FISTA with
//! backtracking and adaptive restart. Both are deterministic full-batch.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{contiguous, num, sigmoid, softplus, text, Hyperparameters, TrainingMeta};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

/// Pushes saturated sigmoid outputs back inside the open unit interval.
pub(crate) fn open_unit(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

impl LogisticModel {
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|r| {
                let z = self.intercept + r.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>();
                open_unit(sigmoid(z))
            })
            .collect()
    }
}

struct Problem<'a> {
    rows: Vec<&'a [f64]>,
    y: &'a [u8],
    d: usize,
    c: f64,
}

impl<'a> Problem<'a> {
    fn n(&self) -> f64 {
        self.y.len() as f64
    }

    fn logits(&self, theta: &[f64]) -> Vec<f64> {
        let (w, b) = theta.split_at(self.d);
        self.rows
            .iter()
            .map(|r| b[0] + r.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    /// Mean cross-entropy and its gradient, without the penalty.
    fn smooth(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let z = self.logits(theta);
        let mut g = vec![0.0; self.d + 1];
        let mut loss = 0.0;
        for (i, (&zi, r)) in z.iter().zip(&self.rows).enumerate() {
            let yi = f64::from(self.y[i]);
            loss += softplus(zi) - yi * zi;
            let resid = sigmoid(zi) - yi;
            for (gj, xj) in g.iter_mut().zip(r.iter()) {
                *gj += resid * xj;
            }
            g[self.d] += resid;
        }
        let n = self.n();
        g.iter_mut().for_each(|v| *v /= n);
        (loss / n, g)
    }

    fn smooth_loss(&self, theta: &[f64]) -> f64 {
        let z = self.logits(theta);
        z.iter()
            .zip(self.y)
            .map(|(&z, &y)| softplus(z) - f64::from(y) * z)
            .sum::<f64>()
            / self.n()
    }

    fn penalty(&self, theta: &[f64], penalty: Penalty) -> f64 {
        let w = &theta[..self.d];
        match penalty {
            Penalty::L1 => w.iter().map(|v| v.abs()).sum::<f64>() / self.c,
            Penalty::L2 => w.iter().map(|v| v * v).sum::<f64>() / (2.0 * self.c),
        }
    }
}

/// Penalized objective at `(w, b)`.
pub fn objective(x: ArrayView2<'_, f64>, y: &[u8], w: &[f64], b: f64, penalty: Penalty, c: f64) -> f64 {
    let x = contiguous(x);
    let p = problem(&x, y, c);
    let theta = pack(w, b);
    p.smooth_loss(&theta) + p.penalty(&theta, penalty)
}

/// Gradient of the penalized objective; for L1 this is the gradient where
/// every weight is non-zero.
pub fn gradient(x: ArrayView2<'_, f64>, y: &[u8], w: &[f64], b: f64, penalty: Penalty, c: f64) -> (Vec<f64>, f64) {
    let x = contiguous(x);
    let p = problem(&x, y, c);
    let (_, mut g) = p.smooth(&pack(w, b));
    for (j, wj) in w.iter().enumerate() {
        g[j] += match penalty {
            Penalty::L1 => wj.signum() / c,
            Penalty::L2 => wj / c,
        };
    }
    let gb = g.pop().unwrap_or(0.0);
    (g, gb)
}

fn pack(w: &[f64], b: f64) -> Vec<f64> {
    let mut t = w.to_vec();
    t.push(b);
    t
}

fn problem<'a>(x: &'a ndarray::Array2<f64>, y: &'a [u8], c: f64) -> Problem<'a> {
    let d = x.ncols();
    let rows = (0..x.nrows())
        .map(|i| {
            let s = x.as_slice().expect("standard layout");
            &s[i * d..(i + 1) * d]
        })
        .collect();
    Problem { rows, y, d, c }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub model: LogisticModel,
    pub converged: bool,
    pub iterations: usize,
    pub loss: f64,
}

/// Minimizes the penalized objective from `start` (zeros when `None`).
pub fn solve(
    x: ArrayView2<'_, f64>,
    y: &[u8],
    penalty: Penalty,
    c: f64,
    max_iter: usize,
    tol: f64,
    start: Option<&LogisticModel>,
) -> Solution {
    let x = contiguous(x);
    let p = problem(&x, y, c);
    let theta0 = match start {
        Some(m) => pack(&m.weights, m.intercept),
        None => vec![0.0; p.d + 1],
    };
    let (theta, converged, iterations) = match penalty {
        Penalty::L2 => newton(&p, theta0, max_iter, tol),
        Penalty::L1 => fista(&p, theta0, max_iter, tol),
    };
    let loss = p.smooth_loss(&theta) + p.penalty(&theta, penalty);
    let intercept = theta[p.d];
    Solution {
        model: LogisticModel {
            weights: theta[..p.d].to_vec(),
            intercept,
        },
        converged,
        iterations,
        loss,
    }
}

pub(crate) fn fit(h: &Hyperparameters, x: ArrayView2<'_, f64>, y: &[u8], seed: u64) -> Result<(LogisticModel, TrainingMeta)> {
    let penalty = if text(h, "penalty") == "l1" { Penalty::L1 } else { Penalty::L2 };
    let sol = solve(x, y, penalty, num(h, "C"), num(h, "max_iter") as usize, num(h, "tol"), None);
    if !sol.converged {
        log::warn!("logistic regression stopped after {} iterations without converging", sol.iterations);
    }
    let meta = TrainingMeta {
        n: x.nrows(),
        d: x.ncols(),
        seed,
        converged: sol.converged,
        iterations: sol.iterations,
        final_loss: sol.loss,
        loss_history: Vec::new(),
    };
    Ok((sol.model, meta))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn newton(p: &Problem<'_>, mut theta: Vec<f64>, max_iter: usize, tol: f64) -> (Vec<f64>, bool, usize) {
    let d = p.d;
    let m = d + 1;
    let objective = |t: &[f64]| p.smooth_loss(t) + p.penalty(t, Penalty::L2);
    let mut f = objective(&theta);
    for it in 0..max_iter {
        let (_, mut g) = p.smooth(&theta);
        for j in 0..d {
            g[j] += theta[j] / p.c;
        }
        if max_abs(&g) < tol {
            return (theta, true, it);
        }
        let z = p.logits(&theta);
        let mut h = vec![0.0; m * m];
        for (r, &zi) in p.rows.iter().zip(&z) {
            let s = sigmoid(zi);
            let wgt = s * (1.0 - s);
            if wgt == 0.0 {
                continue;
            }
            for a in 0..m {
                let xa = if a < d { r[a] } else { 1.0 };
                let wa = wgt * xa;
                for b in 0..=a {
                    let xb = if b < d { r[b] } else { 1.0 };
                    h[a * m + b] += wa * xb;
                }
            }
        }
        let n = p.n();
        for a in 0..m {
            for b in 0..=a {
                h[a * m + b] /= n;
                h[b * m + a] = h[a * m + b];
            }
            if a < d {
                h[a * m + a] += 1.0 / p.c;
            }
        }
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let step = cholesky_solve(&h, &neg_g, m).unwrap_or_else(|| neg_g.clone());
        let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
        if -slope < 1e-13 * (1.0 + f.abs()) {
            // Predicted decrease is below rounding of the objective; the
            // Newton step is taken whole since the quadratic model is exact here.
            theta.iter_mut().zip(&step).for_each(|(a, s)| *a += s);
            f = objective(&theta);
            continue;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let fc = objective(&cand);
            if fc <= f + 1e-4 * t * slope {
                theta = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No representable decrease left along the Newton direction.
            return (theta, max_abs(&g) < tol, it + 1);
        }
    }
    let (_, mut g) = p.smooth(&theta);
    for j in 0..d {
        g[j] += theta[j] / p.c;
    }
    (theta.clone(), max_abs(&g) < tol, max_iter)
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major, m×m),
/// adding jitter to the diagonal when the factorization breaks down.
fn cholesky_solve(a: &[f64], b: &[f64], m: usize) -> Option<Vec<f64>> {
    let mut jitter = 0.0;
    for _ in 0..8 {
        if let Some(l) = cholesky(a, m, jitter) {
            let mut z = b.to_vec();
            for i in 0..m {
                let s: f64 = (0..i).map(|k| l[i * m + k] * z[k]).sum();
                z[i] = (z[i] - s) / l[i * m + i];
            }
            for i in (0..m).rev() {
                let s: f64 = (i + 1..m).map(|k| l[k * m + i] * z[k]).sum();
                z[i] = (z[i] - s) / l[i * m + i];
            }
            return Some(z);
        }
        jitter = if jitter == 0.0 { 1e-12 } else { jitter * 100.0 };
    }
    None
}

fn cholesky(a: &[f64], m: usize, jitter: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * m + k] * l[j * m + k]).sum();
            if i == j {
                let v = a[i * m + i] + jitter - s;
                if v <= 0.0 || !v.is_finite() {
                    return None;
                }
                l[i * m + i] = v.sqrt();
            } else {
                l[i * m + j] = (a[i * m + j] - s) / l[j * m + j];
            }
        }
    }
    Some(l)
}

fn soft_threshold(v: f64, k: f64) -> f64 {
    v.signum() * (v.abs() - k).max(0.0)
}

/// Largest violation of the L1 optimality conditions.
fn l1_violation(p: &Problem<'_>, theta: &[f64], g: &[f64]) -> f64 {
    let mut worst = g[p.d].abs();
    let lam = 1.0 / p.c;
    for j in 0..p.d {
        let v = if theta[j] != 0.0 {
            (g[j] + theta[j].signum() * lam).abs()
        } else {
            (g[j].abs() - lam).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

fn fista(p: &Problem<'_>, theta0: Vec<f64>, max_iter: usize, tol: f64) -> (Vec<f64>, bool, usize) {
    let d = p.d;
    let lam = 1.0 / p.c;
    let objective = |t: &[f64]| p.smooth_loss(t) + p.penalty(t, Penalty::L1);
    let prox = |v: &mut [f64], step: f64| {
        for w in v[..d].iter_mut() {
            *w = soft_threshold(*w, step * lam);
        }
    };

    let mut x = theta0;
    let mut f_x = objective(&x);
    let mut yv = x.clone();
    let mut momentum = 1.0_f64;
    let mut lip = 1.0_f64;
    for it in 0..max_iter {
        let (f_y, g_y) = p.smooth(&yv);
        let mut next;
        loop {
            next = yv.iter().zip(&g_y).map(|(a, g)| a - g / lip).collect::<Vec<_>>();
            prox(&mut next, 1.0 / lip);
            let diff: Vec<f64> = next.iter().zip(&yv).map(|(a, b)| a - b).collect();
            let lin: f64 = diff.iter().zip(&g_y).map(|(a, b)| a * b).sum();
            let sq: f64 = diff.iter().map(|v| v * v).sum();
            if p.smooth_loss(&next) <= f_y + lin + 0.5 * lip * sq + 1e-15 || lip > 1e15 {
                break;
            }
            lip *= 2.0;
        }
        let f_next = objective(&next);
        if f_next > f_x {
            if momentum == 1.0 {
                // Even a plain proximal step cannot decrease: rounding floor.
                let (_, g) = p.smooth(&x);
                let ok = l1_violation(p, &x, &g) < tol;
                return (x, ok, it + 1);
            }
            // Adaptive restart: drop momentum and retake a plain proximal step.
            momentum = 1.0;
            yv = x.clone();
            continue;
        }
        let (_, g_next) = p.smooth(&next);
        if l1_violation(p, &next, &g_next) < tol {
            return (next, true, it + 1);
        }
        let m_next = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let beta = (momentum - 1.0) / m_next;
        yv = next.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
        x = next;
        f_x = f_next;
        momentum = m_next;
        // Let the step size grow back slowly after conservative backtracks.
        lip = (lip * 0.9).max(1e-6);
    }
    let (_, g) = p.smooth(&x);
    let ok = l1_violation(p, &x, &g) < tol;
    (x, ok, max_iter)
}
