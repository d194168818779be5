//! Stratified train/test splitting, stratified k-fold assignment and SMOTE
//! oversampling confined to training rows.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{CohortFrame, Partition};
use crate::error::{Error, Result};
use crate::preprocess::Design;
use crate::rng::{derive_seed, rng_for};

const SPLIT_STREAM: u64 = 0x5911;
const KFOLD_STREAM: u64 = 0xf01d;
const SMOTE_STREAM: u64 = 0x5307;
const FOLD_SMOTE_STREAM: u64 = 0xf5a7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowAssignment {
    pub row_id: String,
    pub partition: Partition,
    /// Cross-validation fold, for training rows once folds are assigned.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold: Option<usize>,
}

/// Replayable assignment of every row to a partition and, for training
/// rows, a fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub test_fraction: f64,
    pub fold_count: usize,
    pub seed: u64,
    pub rows: Vec<RowAssignment>,
}

impl SplitPlan {
    pub fn train_indices(&self) -> Vec<usize> {
        self.indices(Partition::Train)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        self.indices(Partition::Test)
    }

    fn indices(&self, p: Partition) -> Vec<usize> {
        (0..self.rows.len()).filter(|&i| self.rows[i].partition == p).collect()
    }

    pub fn partitions(&self) -> Vec<Partition> {
        self.rows.iter().map(|r| r.partition).collect()
    }

    /// Fold of each training row, in [`SplitPlan::train_indices`] order.
    pub fn train_folds(&self) -> Result<Vec<usize>> {
        self.train_indices()
            .into_iter()
            .map(|i| {
                self.rows[i]
                    .fold
                    .ok_or_else(|| Error::InvalidArgument(format!("row {} has no fold", self.rows[i].row_id)))
            })
            .collect()
    }

    /// Assigns stratified folds to the training rows.
    pub fn with_folds(mut self, labels: &[u8], k: usize, seed: u64) -> Result<SplitPlan> {
        let train = self.train_indices();
        let train_labels: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
        let folds = stratified_kfold(&train_labels, k, seed)?;
        for (&i, f) in train.iter().zip(folds) {
            self.rows[i].fold = Some(f);
        }
        self.fold_count = k;
        Ok(self)
    }

    /// Checks the plan matches a frame row for row.
    pub fn check_against(&self, frame: &CohortFrame) -> Result<()> {
        if self.rows.len() != frame.n_rows() || self.rows.iter().zip(frame.row_ids()).any(|(a, b)| &a.row_id != b) {
            return Err(Error::InvalidArgument("split plan does not match the cohort rows".into()));
        }
        Ok(())
    }
}

fn class_indices(labels: &[u8]) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (i, &y) in labels.iter().enumerate() {
        out[usize::from(y == 1)].push(i);
    }
    out
}

/// Distributes `total` over classes proportionally to `sizes`, giving the
/// leftover units to the largest fractional parts (lower class on ties).
fn largest_remainder(total: usize, sizes: [usize; 2]) -> [usize; 2] {
    let n: usize = sizes.iter().sum();
    let exact = sizes.map(|s| total as f64 * s as f64 / n as f64);
    let mut alloc = exact.map(|e| e.floor() as usize);
    let mut left = total - alloc.iter().sum::<usize>();
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &c in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if alloc[c] < sizes[c] {
            alloc[c] += 1;
            left -= 1;
        }
    }
    alloc
}

/// Test-set size for `n` rows: `ceil(fraction · n)`.
pub fn test_size(n: usize, test_fraction: f64) -> usize {
    ((test_fraction * n as f64 - 1e-9).ceil() as usize).min(n)
}

/// Stratified train/test indices; each class contributes its
/// proportional share of the test set within one row.
pub fn split_indices(labels: &[u8], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("test fraction {test_fraction} not in (0, 1)")));
    }
    let classes = class_indices(labels);
    for (c, idx) in classes.iter().enumerate() {
        if idx.len() < 2 {
            return Err(Error::TooFewRows(format!("class {c} has {} rows; stratification needs 2", idx.len())));
        }
    }
    let alloc = largest_remainder(test_size(labels.len(), test_fraction), [classes[0].len(), classes[1].len()]);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (c, mut idx) in classes.into_iter().enumerate() {
        idx.shuffle(&mut rng_for(seed, SPLIT_STREAM, c as u64));
        test.extend_from_slice(&idx[..alloc[c]]);
        train.extend_from_slice(&idx[alloc[c]..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn stratified_split(frame: &CohortFrame, test_fraction: f64, seed: u64) -> Result<SplitPlan> {
    let (_, test) = split_indices(frame.outcome(), test_fraction, seed)?;
    let mut rows: Vec<RowAssignment> = frame
        .row_ids()
        .iter()
        .map(|id| RowAssignment {
            row_id: id.clone(),
            partition: Partition::Train,
            fold: None,
        })
        .collect();
    for i in test {
        rows[i].partition = Partition::Test;
    }
    Ok(SplitPlan {
        test_fraction,
        fold_count: 0,
        seed,
        rows,
    })
}

/// Fold index per row. Each class is shuffled and dealt round-robin; the
/// second class starts where the first stopped so fold sizes also balance.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("fold count {k} < 2")));
    }
    let classes = class_indices(labels);
    for (c, idx) in classes.iter().enumerate() {
        if idx.len() < k {
            return Err(Error::TooFewRows(format!("class {c} has {} rows for {k} folds", idx.len())));
        }
    }
    let mut folds = vec![0; labels.len()];
    let mut start = 0;
    for (c, mut idx) in classes.into_iter().enumerate() {
        idx.shuffle(&mut rng_for(seed, KFOLD_STREAM, c as u64));
        for (p, &i) in idx.iter().enumerate() {
            folds[i] = (start + p) % k;
        }
        start = (start + idx.len()) % k;
    }
    Ok(folds)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    /// Minority-to-majority ratio after oversampling.
    pub target_ratio: f64,
    pub seed: u64,
}

impl SmoteConfig {
    pub fn new(seed: u64) -> Self {
        SmoteConfig {
            k_neighbors: 5,
            target_ratio: 1.0,
            seed,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.k_neighbors == 0 {
            return Err(Error::Config("SMOTE k_neighbors must be >= 1".into()));
        }
        if !(self.target_ratio > 0.0 && self.target_ratio <= 1.0) {
            return Err(Error::Config(format!("SMOTE target_ratio {} not in (0, 1]", self.target_ratio)));
        }
        Ok(())
    }
}

/// Synthetic rows needed so that `minority / majority` reaches `ratio`.
pub fn synthetic_count(n_minority: usize, n_majority: usize, ratio: f64) -> usize {
    ((ratio * n_majority as f64).round() as usize).saturating_sub(n_minority)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoteOutput {
    pub synthetic: Array2<f64>,
    /// `(base, neighbour)` minority-row indices behind each synthetic row.
    pub origins: Vec<(usize, usize)>,
}

fn k_nearest(rows: &ArrayView2<'_, f64>, k: usize) -> Vec<Vec<usize>> {
    let m = rows.nrows();
    (0..m)
        .map(|i| {
            let a = rows.row(i);
            let mut d: Vec<(f64, usize)> = (0..m)
                .filter(|&j| j != i)
                .map(|j| {
                    let dist: f64 = a.iter().zip(rows.row(j).iter()).map(|(p, q)| (p - q) * (p - q)).sum();
                    (dist, j)
                })
                .collect();
            d.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            d.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Generates `n_synthetic` rows by interpolating between minority rows and
/// one of their `k` nearest minority neighbours. Coordinates flagged in
/// `binary` are rounded back to 0/1 at 0.5.
pub fn smote(minority: ArrayView2<'_, f64>, n_synthetic: usize, binary: &[bool], cfg: &SmoteConfig) -> Result<SmoteOutput> {
    cfg.check()?;
    let (m, d) = minority.dim();
    if binary.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: binary.len(),
        });
    }
    if n_synthetic == 0 {
        return Ok(SmoteOutput {
            synthetic: Array2::zeros((0, d)),
            origins: Vec::new(),
        });
    }
    if m < cfg.k_neighbors + 1 {
        return Err(Error::TooFewRows(format!(
            "SMOTE with k={} needs at least {} minority rows, got {m}",
            cfg.k_neighbors,
            cfg.k_neighbors + 1
        )));
    }
    let neighbours = k_nearest(&minority, cfg.k_neighbors);
    let mut rng = rng_for(cfg.seed, SMOTE_STREAM, 0);
    let mut synthetic = Array2::zeros((n_synthetic, d));
    let mut origins = Vec::with_capacity(n_synthetic);
    for s in 0..n_synthetic {
        let base = rng.random_range(0..m);
        let nb = neighbours[base][rng.random_range(0..cfg.k_neighbors)];
        let lambda: f64 = rng.random();
        for j in 0..d {
            let (a, b) = (minority[[base, j]], minority[[nb, j]]);
            let v = a + lambda * (b - a);
            synthetic[[s, j]] = if binary[j] { f64::from(u8::from(v >= 0.5)) } else { v };
        }
        origins.push((base, nb));
    }
    Ok(SmoteOutput { synthetic, origins })
}

/// Appends SMOTE rows for the minority class of `design`. Synthetic rows
/// get ids `smote:<n>`.
pub fn oversample(design: &Design, cfg: &SmoteConfig) -> Result<(Design, SmoteOutput)> {
    let pos = design.y.iter().filter(|&&v| v == 1).count();
    let neg = design.y.len() - pos;
    let minority_label = u8::from(pos < neg);
    let (n_min, n_maj) = if pos < neg { (pos, neg) } else { (neg, pos) };
    let idx: Vec<usize> = (0..design.y.len()).filter(|&i| design.y[i] == minority_label).collect();
    let minority = design.x.select(Axis(0), &idx);
    let out = smote(minority.view(), synthetic_count(n_min, n_maj, cfg.target_ratio), &design.binary, cfg)?;
    let mut augmented = design.clone();
    if out.synthetic.nrows() > 0 {
        augmented.x = ndarray::concatenate(Axis(0), &[design.x.view(), out.synthetic.view()])
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        augmented.y.extend(std::iter::repeat_n(minority_label, out.synthetic.nrows()));
        augmented.row_ids.extend((0..out.synthetic.nrows()).map(|i| format!("smote:{i}")));
    }
    Ok((augmented, out))
}

/// One cross-validation repetition: an oversampled training part and an
/// untouched validation part.
#[derive(Clone, Debug)]
pub struct FoldData {
    pub fold: usize,
    pub train: Design,
    pub validation: Design,
    pub synthetic_rows: usize,
}

/// Seed used for SMOTE inside fold `fold`.
pub fn fold_smote_seed(seed: u64, fold: usize) -> u64 {
    derive_seed(seed, FOLD_SMOTE_STREAM, fold as u64)
}

/// Builds every fold's training set from the other folds' rows only and
/// oversamples it; validation rows are never used for neighbour search.
/// `smote_cfg = None` leaves training folds unbalanced.
pub fn balance_training_folds(train: &Design, folds: &[usize], k: usize, smote_cfg: Option<&SmoteConfig>) -> Result<Vec<FoldData>> {
    if folds.len() != train.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: train.n_rows(),
            actual: folds.len(),
        });
    }
    (0..k)
        .into_par_iter()
        .map(|f| {
            let tr: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] != f).collect();
            let va: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] == f).collect();
            let base = train.rows(&tr);
            let (train_part, synthetic_rows) = match smote_cfg {
                Some(cfg) => {
                    let cfg = SmoteConfig {
                        seed: fold_smote_seed(cfg.seed, f),
                        ..*cfg
                    };
                    let (aug, out) = oversample(&base, &cfg)?;
                    (aug, out.synthetic.nrows())
                }
                None => (base, 0),
            };
            Ok(FoldData {
                fold: f,
                train: train_part,
                validation: train.rows(&va),
                synthetic_rows,
            })
        })
        .collect()
}
