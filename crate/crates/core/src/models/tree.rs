//! Binary decision trees: the shared node layout and a CART classifier
//! builder using Gini impurity.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Nodes in build order; the root is node 0. Rows with
/// `x[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }
}

/// Threshold between two consecutive distinct sorted values.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CartParams {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Non-constant candidate features examined per split.
    pub max_features: usize,
}

pub struct CartFit {
    pub tree: Tree,
    /// Per-feature sum of `p(t)·Δi(t)` over the tree's splits, where `p(t)`
    /// is the fraction of the tree's sample reaching node `t`.
    pub impurity_decrease: Vec<f64>,
}

fn gini_mass(n: usize, pos: usize) -> f64 {
    // n · Gini(t)
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    n as f64 * 2.0 * p * (1.0 - p)
}

struct Best {
    feature: usize,
    threshold: f64,
    child_mass: f64,
}

/// Grows one classification tree on `sample` (row indices, repeats allowed).
pub fn build_cart(rows: &[&[f64]], y: &[u8], sample: Vec<usize>, params: &CartParams, rng: &mut Rng) -> CartFit {
    let d = rows.first().map_or(0, |r| r.len());
    let total = sample.len() as f64;
    let mut importance = vec![0.0; d];
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut stack = vec![(0usize, sample, 0usize)];
    let mut features: Vec<usize> = (0..d).collect();
    let mut pairs: Vec<(f64, u8)> = Vec::new();

    while let Some((id, idx, depth)) = stack.pop() {
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| y[i] == 1).count();
        let value = pos as f64 / n as f64;
        let can_split = pos > 0
            && pos < n
            && n >= 2 * params.min_samples_leaf
            && params.max_depth.is_none_or(|m| depth < m);
        if !can_split {
            nodes[id] = Node::Leaf { value };
            continue;
        }

        features.shuffle(rng);
        let mut best: Option<Best> = None;
        let mut visited = 0;
        for &f in &features {
            if visited >= params.max_features {
                break;
            }
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (rows[i][f], y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[n - 1].0 {
                continue;
            }
            visited += 1;
            let mut left_pos = 0;
            for k in 0..n - 1 {
                left_pos += usize::from(pairs[k].1);
                let n_left = k + 1;
                if pairs[k].0 == pairs[k + 1].0 || n_left < params.min_samples_leaf || n - n_left < params.min_samples_leaf {
                    continue;
                }
                let mass = gini_mass(n_left, left_pos) + gini_mass(n - n_left, pos - left_pos);
                if best.as_ref().is_none_or(|b| mass < b.child_mass) {
                    best = Some(Best {
                        feature: f,
                        threshold: midpoint(pairs[k].0, pairs[k + 1].0),
                        child_mass: mass,
                    });
                }
            }
        }

        let Some(b) = best else {
            nodes[id] = Node::Leaf { value };
            continue;
        };
        importance[b.feature] += (gini_mass(n, pos) - b.child_mass).max(0.0) / total;
        let (left, right): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| rows[i][b.feature] <= b.threshold);
        let l = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[id] = Node::Split {
            feature: b.feature,
            threshold: b.threshold,
            left: l,
            right: l + 1,
        };
        // Right first so the left subtree is built next (depth-first order).
        stack.push((l + 1, right, depth + 1));
        stack.push((l, left, depth + 1));
    }
    CartFit {
        tree: Tree { nodes },
        impurity_decrease: importance,
    }
}
