//! Gradient-boosted trees on the logistic loss.
//!
//! Each round fits a regression tree to first and second derivatives of
//! the loss; leaf values are regularized Newton steps
//! `-T_α(G) / (H + λ)` where `T_α` soft-thresholds the gradient sum. One
//! engine provides three growth modes: best-first with a leaf cap,
//! depth-wise, and depth-wise with a per-round row permutation.

use ndarray::ArrayView2;
use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::tree::{midpoint, Node, Tree};
use super::{contiguous, logit_loss, num, sigmoid, Family, Hyperparameters, TrainingMeta};
use crate::error::Result;
use crate::rng::rng_for;

const ROUND_STREAM: u64 = 0x6bd7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Growth {
    LeafWise { max_leaves: usize },
    LevelWise,
    Ordered,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoostParams {
    pub growth: Growth,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub n_estimators: usize,
    pub subsample: f64,
    pub reg_alpha: f64,
    pub reg_lambda: f64,
    pub min_child_weight: f64,
}

impl BoostParams {
    pub(crate) fn from_hyper(family: Family, h: &Hyperparameters) -> Self {
        let growth = match family {
            Family::GbdtLeafwise => Growth::LeafWise {
                max_leaves: num(h, "max_leaves") as usize,
            },
            Family::GbdtOrdered => Growth::Ordered,
            _ => Growth::LevelWise,
        };
        BoostParams {
            growth,
            learning_rate: num(h, "learning_rate"),
            max_depth: num(h, "max_depth") as usize,
            n_estimators: num(h, "n_estimators") as usize,
            subsample: num(h, "subsample"),
            reg_alpha: num(h, "reg_alpha"),
            reg_lambda: num(h, "reg_lambda"),
            min_child_weight: num(h, "min_child_weight"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    /// Prior log-odds of the positive class.
    pub base_score: f64,
    /// Trees with the learning rate already folded into leaf values.
    pub trees: Vec<Tree>,
}

impl GbdtModel {
    pub fn raw_score(&self, row: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let x = contiguous(x);
        x.rows()
            .into_iter()
            .map(|r| sigmoid(self.raw_score(r.to_slice().expect("contiguous row"))))
            .collect()
    }
}

fn soft_threshold(g: f64, alpha: f64) -> f64 {
    g.signum() * (g.abs() - alpha).max(0.0)
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct Builder<'a> {
    rows: &'a [&'a [f64]],
    grad: &'a [f64],
    hess: &'a [f64],
    p: &'a BoostParams,
}

impl Builder<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        let t = soft_threshold(g, self.p.reg_alpha);
        t * t / (h + self.p.reg_lambda)
    }

    fn leaf_value(&self, members: &[usize]) -> f64 {
        let (g, h) = self.sums(members);
        let denom = h + self.p.reg_lambda;
        if denom <= 0.0 {
            return 0.0;
        }
        -soft_threshold(g, self.p.reg_alpha) / denom * self.p.learning_rate
    }

    fn sums(&self, members: &[usize]) -> (f64, f64) {
        members.iter().fold((0.0, 0.0), |(g, h), &i| (g + self.grad[i], h + self.hess[i]))
    }

    fn best_split(&self, members: &[usize]) -> Option<Candidate> {
        let (g_tot, h_tot) = self.sums(members);
        let parent = self.score(g_tot, h_tot);
        let d = self.rows.first().map_or(0, |r| r.len());
        let mut best: Option<Candidate> = None;
        let mut order = members.to_vec();
        for f in 0..d {
            order.sort_by(|&a, &b| self.rows[a][f].total_cmp(&self.rows[b][f]));
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 0..order.len().saturating_sub(1) {
                let i = order[k];
                gl += self.grad[i];
                hl += self.hess[i];
                let (v, next) = (self.rows[i][f], self.rows[order[k + 1]][f]);
                if v == next {
                    continue;
                }
                let hr = h_tot - hl;
                if hl < self.p.min_child_weight || hr < self.p.min_child_weight {
                    continue;
                }
                let gain = 0.5 * (self.score(gl, hl) + self.score(g_tot - gl, hr) - parent);
                if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Candidate {
                        gain,
                        feature: f,
                        threshold: midpoint(v, next),
                    });
                }
            }
        }
        best
    }

    fn partition(&self, members: Vec<usize>, c: &Candidate) -> (Vec<usize>, Vec<usize>) {
        members.into_iter().partition(|&i| self.rows[i][c.feature] <= c.threshold)
    }

    fn build(&self, members: Vec<usize>) -> Tree {
        match self.p.growth {
            Growth::LeafWise { max_leaves } => self.build_best_first(members, max_leaves),
            Growth::LevelWise | Growth::Ordered => self.build_depth_wise(members),
        }
    }

    fn build_depth_wise(&self, members: Vec<usize>) -> Tree {
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut frontier = vec![(0usize, members)];
        for depth in 0..=self.p.max_depth {
            let mut next = Vec::new();
            for (id, m) in frontier {
                let split = if depth < self.p.max_depth { self.best_split(&m) } else { None };
                match split {
                    Some(c) => {
                        let l = nodes.len();
                        nodes.push(Node::Leaf { value: 0.0 });
                        nodes.push(Node::Leaf { value: 0.0 });
                        nodes[id] = Node::Split {
                            feature: c.feature,
                            threshold: c.threshold,
                            left: l,
                            right: l + 1,
                        };
                        let (a, b) = self.partition(m, &c);
                        next.push((l, a));
                        next.push((l + 1, b));
                    }
                    None => nodes[id] = Node::Leaf { value: self.leaf_value(&m) },
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        Tree { nodes }
    }

    fn build_best_first(&self, members: Vec<usize>, max_leaves: usize) -> Tree {
        struct Open {
            id: usize,
            depth: usize,
            members: Vec<usize>,
            split: Option<Candidate>,
        }
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let root_split = self.best_split(&members);
        let mut open = vec![Open {
            id: 0,
            depth: 0,
            members,
            split: root_split,
        }];
        let mut leaves = 1;
        while leaves < max_leaves {
            // Highest gain first; earlier-created nodes win ties.
            let pick = open
                .iter()
                .enumerate()
                .filter(|(_, o)| o.depth < self.p.max_depth && o.split.is_some())
                .max_by(|(ia, a), (ib, b)| {
                    let ga = a.split.as_ref().map_or(0.0, |c| c.gain);
                    let gb = b.split.as_ref().map_or(0.0, |c| c.gain);
                    ga.total_cmp(&gb).then(ib.cmp(ia))
                })
                .map(|(i, _)| i);
            let Some(i) = pick else { break };
            let o = open.swap_remove(i);
            let c = o.split.expect("filtered on split");
            let l = nodes.len();
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            nodes[o.id] = Node::Split {
                feature: c.feature,
                threshold: c.threshold,
                left: l,
                right: l + 1,
            };
            let (a, b) = self.partition(o.members, &c);
            for (id, m) in [(l, a), (l + 1, b)] {
                let split = self.best_split(&m);
                open.push(Open {
                    id,
                    depth: o.depth + 1,
                    members: m,
                    split,
                });
            }
            leaves += 1;
            open.sort_by_key(|o| o.id);
        }
        for o in open {
            nodes[o.id] = Node::Leaf {
                value: self.leaf_value(&o.members),
            };
        }
        Tree { nodes }
    }
}

/// Runs the boosting loop; returns the model and the per-round training
/// loss (mean cross-entropy on all rows).
pub fn train(x: ArrayView2<'_, f64>, y: &[u8], params: &BoostParams, seed: u64) -> (GbdtModel, Vec<f64>) {
    let x = contiguous(x);
    let (n, d) = x.dim();
    let data = x.as_slice().expect("standard layout");
    let rows: Vec<&[f64]> = (0..n).map(|i| &data[i * d..(i + 1) * d]).collect();

    let prior = y.iter().map(|&v| f64::from(v)).sum::<f64>() / n as f64;
    let base_score = (prior / (1.0 - prior)).ln();
    let mut raw = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.n_estimators);
    let mut history = Vec::with_capacity(params.n_estimators);
    let m = ((params.subsample * n as f64).ceil() as usize).clamp(1, n);

    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for round in 0..params.n_estimators {
        for i in 0..n {
            let p = sigmoid(raw[i]);
            grad[i] = p - f64::from(y[i]);
            hess[i] = p * (1.0 - p);
        }
        let mut rng = rng_for(seed, ROUND_STREAM, round as u64);
        let members: Vec<usize> = match params.growth {
            Growth::Ordered => {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                perm.truncate(m);
                perm
            }
            _ if m < n => {
                let mut s = index::sample(&mut rng, n, m).into_vec();
                s.sort_unstable();
                s
            }
            _ => (0..n).collect(),
        };
        let builder = Builder {
            rows: &rows,
            grad: &grad,
            hess: &hess,
            p: params,
        };
        let tree = builder.build(members);
        for (r, row) in raw.iter_mut().zip(&rows) {
            *r += tree.predict_row(row);
        }
        trees.push(tree);
        history.push(logit_loss(&raw, y));
    }
    (GbdtModel { base_score, trees }, history)
}

pub(crate) fn fit(family: Family, h: &Hyperparameters, x: ArrayView2<'_, f64>, y: &[u8], seed: u64) -> Result<(GbdtModel, TrainingMeta)> {
    let params = BoostParams::from_hyper(family, h);
    let (model, history) = train(x, y, &params, seed);
    let meta = TrainingMeta {
        n: x.nrows(),
        d: x.ncols(),
        seed,
        converged: true,
        iterations: params.n_estimators,
        final_loss: history.last().copied().unwrap_or(f64::NAN),
        loss_history: history,
    };
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::auroc;
    use ndarray::Array2;
    use rand::Rng;

    fn params(growth: Growth) -> BoostParams {
        BoostParams {
            growth,
            learning_rate: 0.1,
            max_depth: 3,
            n_estimators: 30,
            subsample: 1.0,
            reg_alpha: 0.0,
            reg_lambda: 1.0,
            min_child_weight: 1.0,
        }
    }

    fn noisy(seed: u64, n: usize) -> (Array2<f64>, Vec<u8>) {
        let mut rng = crate::rng::rng_from_seed(seed);
        let x = Array2::from_shape_fn((n, 4), |_| rng.random_range(-2.0..2.0));
        let y = (0..n)
            .map(|i| u8::from(x[[i, 0]] * x[[i, 1]] + 0.5 * x[[i, 2]] + rng.random_range(-0.5..0.5) > 0.0))
            .collect();
        (x, y)
    }

    #[test]
    fn zero_learning_rate_is_prior() {
        let (x, y) = noisy(1, 50);
        let mut p = params(Growth::LevelWise);
        p.learning_rate = 0.0;
        let (m, _) = train(x.view(), &y, &p, 0);
        let prior = y.iter().filter(|&&v| v == 1).count() as f64 / 50.0;
        for q in m.predict_proba(x.view()) {
            assert!((q - prior).abs() < 1e-12);
        }
    }

    #[test]
    fn stump_separates() {
        let x = Array2::from_shape_fn((20, 2), |(i, j)| if j == 0 { i as f64 } else { (i * 7 % 5) as f64 });
        let y: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        let mut p = params(Growth::LevelWise);
        p.max_depth = 1;
        p.n_estimators = 1;
        let (m, _) = train(x.view(), &y, &p, 0);
        assert_eq!(m.trees[0].depth(), 1);
        assert_eq!(auroc(&m.predict_proba(x.view()), &y).unwrap(), 1.0);
    }

    #[test]
    fn training_loss_non_increasing() {
        let (x, y) = noisy(2, 200);
        for g in [Growth::LevelWise, Growth::LeafWise { max_leaves: 6 }, Growth::Ordered] {
            let (_, h) = train(x.view(), &y, &params(g), 4);
            for w in h.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{g:?}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn leaf_cap_respected() {
        let (x, y) = noisy(3, 300);
        let mut p = params(Growth::LeafWise { max_leaves: 5 });
        p.max_depth = 10;
        let (m, _) = train(x.view(), &y, &p, 0);
        assert!(m.trees.iter().all(|t| t.n_leaves() <= 5));
        assert!(m.trees.iter().any(|t| t.n_leaves() == 5));
    }

    #[test]
    fn alpha_soft_thresholds_leaves() {
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        let (x, y) = noisy(4, 40);
        let mut p = params(Growth::LevelWise);
        p.reg_alpha = 1e6;
        let (m, _) = train(x.view(), &y, &p, 0);
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
    }

    #[test]
    fn subsampled_rounds_are_seeded() {
        let (x, y) = noisy(5, 100);
        let mut p = params(Growth::Ordered);
        p.subsample = 0.7;
        let a = train(x.view(), &y, &p, 1);
        assert_eq!(a, train(x.view(), &y, &p, 1));
        assert_ne!(a.0, train(x.view(), &y, &p, 2).0);
    }
}
