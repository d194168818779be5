//! Analytic gradients against central finite differences, h = 1e-5.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tabrisk::models::logistic::{gradient, objective, Penalty};
use tabrisk::models::mlp::MlpModel;

const H: f64 = 1e-5;

pub fn random_problem(n: usize, d: usize, seed: u64) -> (Array2<f64>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 4.0 - 2.0);
    let y = (0..n)
        .map(|i| {
            let z = x[[i, 0]] - 0.5 * x[[i, 1 % d]] + rng.random::<f64>() - 0.5;
            u8::from(z > 0.2)
        })
        .collect();
    (x, y)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Worst relative error over `instances` random problems, both penalties.
pub fn logistic_max_error(instances: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for inst in 0..instances {
        let (x, y) = random_problem(40, 4, inst);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + inst);
        // Weights stay away from zero so the L1 term is differentiable.
        let w: Vec<f64> = (0..4).map(|_| (0.2 + rng.random::<f64>()) * if rng.random() { 1.0 } else { -1.0 }).collect();
        let b = rng.random::<f64>() - 0.5;
        for penalty in [Penalty::L1, Penalty::L2] {
            let c = 0.5 + rng.random::<f64>();
            let f = |w: &[f64], b: f64| objective(x.view(), &y, w, b, penalty, c);
            let (g, gb) = gradient(x.view(), &y, &w, b, penalty, c);
            for j in 0..w.len() {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[j] += H;
                wm[j] -= H;
                worst = worst.max(rel_err(g[j], (f(&wp, b) - f(&wm, b)) / (2.0 * H)));
            }
            worst = worst.max(rel_err(gb, (f(&w, b + H) - f(&w, b - H)) / (2.0 * H)));
        }
    }
    worst
}

/// Worst relative error of the MLP loss gradient (no dropout).
pub fn mlp_max_error(instances: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for inst in 0..instances {
        let (x, y) = random_problem(30, 3, 50 + inst);
        let mut rng = tabrisk::rng::rng_from_seed(inst);
        let model = MlpModel::init(3, 8, &mut rng);
        let (_, g) = model.loss_and_gradient(x.view(), &y);
        let base = model.flat();
        let mut probe = model.clone();
        let mut loss_at = |v: &[f64]| {
            probe.set_flat(v);
            probe.loss_and_gradient(x.view(), &y).0
        };
        for k in 0..base.len() {
            let mut v = base.clone();
            v[k] += H;
            let lp = loss_at(&v);
            v[k] -= 2.0 * H;
            let lm = loss_at(&v);
            worst = worst.max(rel_err(g[k], (lp - lm) / (2.0 * H)));
        }
    }
    worst
}
