//! Discrimination and confusion-matrix metrics, ROC points and percentile
//! bootstrap intervals.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::stats;

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    Ok((pos, labels.len() - pos))
}

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of midranks of the positives, in doubled units to stay integral.
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank2 = (i + 1 + j + 1) as u64;
        let pos_in_block = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u64;
        rank_sum2 += midrank2 * pos_in_block;
        i = j + 1;
    }
    let np = n_pos as f64;
    let u = rank_sum2 as f64 / 2.0 - np * (np + 1.0) / 2.0;
    Ok(u / (np * n_neg as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Threshold metrics; `None` marks a zero denominator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub threshold: f64,
    pub counts: Confusion,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Predictions are `score >= threshold`.
pub fn confusion_metrics(scores: &[f64], labels: &[u8], threshold: f64) -> Result<ConfusionMetrics> {
    check_inputs(scores, labels)?;
    let mut c = Confusion { tp: 0, fp: 0, tn: 0, fn_: 0 };
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(metrics_from_counts(c, threshold))
}

pub fn metrics_from_counts(c: Confusion, threshold: f64) -> ConfusionMetrics {
    let sensitivity = ratio(c.tp, c.tp + c.fn_);
    let ppv = ratio(c.tp, c.tp + c.fp);
    let f1 = match (ppv, sensitivity) {
        (Some(p), Some(s)) if p + s > 0.0 => Some(2.0 * p * s / (p + s)),
        _ => None,
    };
    ConfusionMetrics {
        threshold,
        counts: c,
        accuracy: ratio(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn_),
        f1,
        sensitivity,
        specificity: ratio(c.tn, c.tn + c.fp),
        ppv,
        npv: ratio(c.tn, c.tn + c.fn_),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC points at every distinct score, from (0, 0) to (1, 1).
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<RocPoint>> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("ROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
    }
    Ok(points)
}

/// Draws allowed per replicate before giving up on a two-class resample.
pub const BOOTSTRAP_MAX_RETRIES: usize = 1000;
const BOOTSTRAP_STREAM: u64 = 0xb007;

/// Percentile bootstrap interval `[alpha/2, 1 - alpha/2]` for `metric`.
///
/// Each replicate resamples `(score, label)` pairs with replacement from
/// its own seed-derived stream; single-class draws are redrawn.
pub fn bootstrap_ci<F>(scores: &[f64], labels: &[u8], metric: F, n_replicates: usize, alpha: f64, seed: u64) -> Result<(f64, f64)>
where
    F: Fn(&[f64], &[u8]) -> Result<f64> + Sync,
{
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    let n = scores.len();
    if n < 2 || n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("bootstrap needs n >= 2 and both classes".into()));
    }
    if n_replicates == 0 || !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument("bootstrap needs replicates > 0 and alpha in (0, 1)".into()));
    }
    let mut values: Vec<f64> = (0..n_replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_for(seed, BOOTSTRAP_STREAM, r as u64);
            let mut s = vec![0.0; n];
            let mut y = vec![0u8; n];
            for _ in 0..BOOTSTRAP_MAX_RETRIES {
                for k in 0..n {
                    let i = rng.random_range(0..n);
                    s[k] = scores[i];
                    y[k] = labels[i];
                }
                let pos = y.iter().filter(|&&v| v == 1).count();
                if pos > 0 && pos < n {
                    return metric(&s, &y);
                }
            }
            Err(Error::RetryBudget(BOOTSTRAP_MAX_RETRIES))
        })
        .collect::<Result<_>>()?;
    values.sort_by(f64::total_cmp);
    Ok((
        stats::quantile_sorted(&values, alpha / 2.0),
        stats::quantile_sorted(&values, 1.0 - alpha / 2.0),
    ))
}

/// Renders `0.825 (0.779--0.867)`.
pub fn format_ci(point: f64, lo: f64, hi: f64) -> String {
    format!("{point:.3} ({lo:.3}--{hi:.3})")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert!(matches!(auroc(&[0.1, 0.2], &[1, 1]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn confusion_examples() {
        let m = confusion_metrics(&[0.9, 0.8, 0.1, 0.2], &[1, 1, 0, 0], 0.5).unwrap();
        for v in [m.accuracy, m.f1, m.sensitivity, m.specificity, m.ppv, m.npv] {
            assert_eq!(v, Some(1.0));
        }
        let m = confusion_metrics(&[0.1, 0.2, 0.3], &[1, 0, 0], 0.5).unwrap();
        assert_eq!(m.sensitivity, Some(0.0));
        assert_eq!(m.specificity, Some(1.0));
        assert_eq!(m.ppv, None);
        assert_eq!(m.f1, None);

        let c = Confusion { tp: 2, fp: 1, tn: 6, fn_: 1 };
        let m = metrics_from_counts(c, 0.5);
        assert!((m.sensitivity.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.specificity.unwrap() - 6.0 / 7.0).abs() < 1e-15);
        assert!((m.ppv.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.npv.unwrap() - 6.0 / 7.0).abs() < 1e-15);
        assert!((m.accuracy.unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn threshold_is_inclusive() {
        let m = confusion_metrics(&[0.5], &[1], 0.5).unwrap();
        assert_eq!(m.counts.tp, 1);
    }

    #[test]
    fn roc_endpoints() {
        let pts = roc_curve(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap();
        assert_eq!((pts[0].fpr, pts[0].tpr), (0.0, 0.0));
        let last = pts.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        let area: f64 = pts.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum();
        assert!((area - 0.75).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_separated_is_degenerate() {
        let scores: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let labels: Vec<u8> = (0..40).map(|i| u8::from(i >= 20)).collect();
        let (lo, hi) = bootstrap_ci(&scores, &labels, auroc, 200, 0.05, 1).unwrap();
        assert_eq!((lo, hi), (1.0, 1.0));
    }

    #[test]
    fn bootstrap_is_seed_deterministic() {
        let scores: Vec<f64> = (0..60).map(|i| ((i * 37) % 60) as f64).collect();
        let labels: Vec<u8> = (0..60).map(|i| u8::from(i % 3 == 0)).collect();
        let a = bootstrap_ci(&scores, &labels, auroc, 300, 0.05, 9).unwrap();
        let b = bootstrap_ci(&scores, &labels, auroc, 300, 0.05, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.0 <= a.1);
    }

    #[test]
    fn ci_format() {
        assert_eq!(format_ci(0.825, 0.779, 0.867), "0.825 (0.779--0.867)");
    }
}
