//! Two-stage feature selection: a univariate ANOVA F filter followed by
//! random-forest Gini-importance ranking of the survivors.

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::forest::{self, ForestParams};

pub const DEFAULT_K1: usize = 40;
pub const DEFAULT_K2: usize = 19;

/// One-way ANOVA F statistic for two groups (df 1 and n − 2).
///
/// Zero within-group variance with distinct group means returns
/// `f64::INFINITY`; a constant feature returns 0.
pub fn anova_f(values: &[f64], labels: &[u8]) -> Result<f64> {
    if values.len() != labels.len() {
        return Err(Error::InvalidArgument(format!("{} values for {} labels", values.len(), labels.len())));
    }
    let n = values.len();
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    let n0 = n - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::DegenerateLabels);
    }
    if n < 3 {
        return Err(Error::TooFewRows(format!("ANOVA needs n >= 3, got {n}")));
    }
    let (mut s0, mut s1) = (0.0, 0.0);
    for (&v, &y) in values.iter().zip(labels) {
        if y == 1 {
            s1 += v;
        } else {
            s0 += v;
        }
    }
    let (m0, m1) = (s0 / n0 as f64, s1 / n1 as f64);
    let grand = (s0 + s1) / n as f64;
    let ssb = n0 as f64 * (m0 - grand).powi(2) + n1 as f64 * (m1 - grand).powi(2);
    let ssw: f64 = values
        .iter()
        .zip(labels)
        .map(|(&v, &y)| (v - if y == 1 { m1 } else { m0 }).powi(2))
        .sum();
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    // Within-group scatter indistinguishable from rounding counts as zero.
    let noise = n as f64 * (4.0 * f64::EPSILON * scale).powi(2);
    if ssw <= noise {
        return Ok(if ssb > noise { f64::INFINITY } else { 0.0 });
    }
    Ok(ssb / (ssw / (n - 2) as f64))
}

/// F statistic of every column of `x`.
pub fn anova_scores(x: ArrayView2<'_, f64>, labels: &[u8]) -> Result<Vec<f64>> {
    x.axis_iter(Axis(1)).map(|c| anova_f(&c.to_vec(), labels)).collect()
}

/// Positions of the `k` best scores, highest first; equal scores keep
/// their input order.
pub fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Names of the top `k` features by F statistic; ties follow `names` order.
pub fn select_k_best(names: &[String], scores: &[f64], k: usize) -> Result<Vec<String>> {
    if k == 0 || k > names.len() {
        return Err(Error::InvalidArgument(format!("k = {k} must be in 1..={}", names.len())));
    }
    Ok(rank_desc(scores).into_iter().take(k).map(|j| names[j].clone()).collect())
}

/// Normalized Gini importance per column from a random forest.
pub fn rf_gini_importance(x: ArrayView2<'_, f64>, labels: &[u8], params: &ForestParams, seed: u64) -> Result<Vec<f64>> {
    crate::models::check_training_input(&x, labels)?;
    Ok(forest::train(x, labels, params, seed).feature_importances)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterScore {
    pub feature: String,
    #[serde(with = "crate::stats::extended_float")]
    pub f_statistic: f64,
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScore {
    pub feature: String,
    pub importance: f64,
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroppedByStage {
    pub feature: String,
    pub stage: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub stage1: Vec<FilterScore>,
    pub stage2: Vec<ImportanceScore>,
    pub final_features: Vec<String>,
    pub dropped: Vec<DroppedByStage>,
}

/// Keeps the top `k1` columns by F, ranks them by forest importance and
/// keeps the top `k2`.
pub fn two_stage_select(
    names: &[String],
    x: ArrayView2<'_, f64>,
    labels: &[u8],
    k1: usize,
    k2: usize,
    params: &ForestParams,
    seed: u64,
) -> Result<SelectionReport> {
    if names.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            actual: names.len(),
        });
    }
    if k2 == 0 || k2 > k1 {
        return Err(Error::InvalidArgument(format!("need 1 <= k2 ({k2}) <= k1 ({k1})")));
    }
    let scores = anova_scores(x, labels)?;
    let order = rank_desc(&scores);
    if k1 > names.len() {
        return Err(Error::InvalidArgument(format!("k1 = {k1} exceeds {} candidate features", names.len())));
    }
    let stage1: Vec<FilterScore> = order
        .iter()
        .enumerate()
        .map(|(r, &j)| FilterScore {
            feature: names[j].clone(),
            f_statistic: scores[j],
            rank: r + 1,
        })
        .collect();
    let mut dropped: Vec<DroppedByStage> = stage1[k1..]
        .iter()
        .map(|s| DroppedByStage {
            feature: s.feature.clone(),
            stage: "stage1".into(),
            reason: format!("F rank {} > k1 = {k1}", s.rank),
        })
        .collect();

    let kept: Vec<usize> = order[..k1].to_vec();
    let sub = x.select(Axis(1), &kept);
    let imp = rf_gini_importance(sub.view(), labels, params, seed)?;
    let imp_order = rank_desc(&imp);
    let stage2: Vec<ImportanceScore> = imp_order
        .iter()
        .enumerate()
        .map(|(r, &j)| ImportanceScore {
            feature: names[kept[j]].clone(),
            importance: imp[j],
            rank: r + 1,
        })
        .collect();
    dropped.extend(stage2[k2..].iter().map(|s| DroppedByStage {
        feature: s.feature.clone(),
        stage: "stage2".into(),
        reason: format!("importance rank {} > k2 = {k2}", s.rank),
    }));
    Ok(SelectionReport {
        final_features: stage2[..k2].iter().map(|s| s.feature.clone()).collect(),
        stage1,
        stage2,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anova_examples() {
        let f = anova_f(&[1.0, 2.0, 3.0, 2.0, 3.0, 4.0], &[0, 0, 0, 1, 1, 1]).unwrap();
        assert!((f - 1.5).abs() < 1e-12);
        assert_eq!(anova_f(&[1.0, 3.0, 2.0, 2.0], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(anova_f(&[0.0, 0.0, 1.0, 1.0], &[0, 0, 1, 1]).unwrap(), f64::INFINITY);
        assert!(matches!(anova_f(&[1.0, 2.0, 3.0], &[1, 1, 1]), Err(Error::DegenerateLabels)));
    }

    #[test]
    fn infinite_f_sorts_first_and_round_trips() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let top = select_k_best(&names, &[3.0, f64::INFINITY, 3.0], 3).unwrap();
        assert_eq!(top, vec!["b", "a", "c"]);
        let s = FilterScore {
            feature: "b".into(),
            f_statistic: f64::INFINITY,
            rank: 1,
        };
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"inf\""));
        assert_eq!(serde_json::from_str::<FilterScore>(&json).unwrap(), s);
    }

    #[test]
    fn select_k_best_bounds() {
        let names = vec!["a".to_string()];
        assert!(select_k_best(&names, &[1.0], 0).is_err());
        assert!(select_k_best(&names, &[1.0], 2).is_err());
    }
}
