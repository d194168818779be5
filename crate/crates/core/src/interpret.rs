//! Cohort comparisons (Welch t-tests), leave-one-feature-out ablation and
//! first-order accumulated local effects.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{Column, CohortFrame, FeatureKind};
use crate::error::{Error, Result};
use crate::models::ProbabilityModel;
use crate::preprocess::indicator_name;
use crate::stats;

pub const DEFAULT_ABLATION_REPEATS: usize = 10;
pub const DEFAULT_ALE_BINS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub mean_a: f64,
    pub sd_a: f64,
    pub mean_b: f64,
    pub sd_b: f64,
    #[serde(with = "stats::extended_float")]
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Two-sided Welch t-test of `a` against `b`.
///
/// With both variances zero the result is `t = 0, p = 1` for equal means
/// and `t = ±inf, p = 0` otherwise; `df` is then `n_a + n_b - 2`.
pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::TooFewRows(format!("t-test needs 2 values per group, got {} and {}", a.len(), b.len())));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (stats::mean(a), stats::mean(b));
    let (va, vb) = (stats::sample_variance(a), stats::sample_variance(b));
    let (qa, qb) = (va / na, vb / nb);
    let se2 = qa + qb;
    let (t, df, p) = if se2 == 0.0 {
        let df = na + nb - 2.0;
        if ma == mb {
            (0.0, df, 1.0)
        } else {
            let t = if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY };
            (t, df, 0.0)
        }
    } else {
        let t = (ma - mb) / se2.sqrt();
        let df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
        (t, df, stats::student_t_two_sided_p(t, df))
    };
    Ok(WelchTest {
        mean_a: ma,
        sd_a: va.sqrt(),
        mean_b: mb,
        sd_b: vb.sqrt(),
        t,
        df,
        p,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestRow {
    pub feature: String,
    pub unit: String,
    pub n_a: usize,
    pub n_b: usize,
    #[serde(flatten)]
    pub test: WelchTest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortTable {
    pub group_a: String,
    pub group_b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub rows: Vec<TTestRow>,
}

/// Observed values of feature `j` as numbers. Categorical features yield
/// one 0/1 series per reported level.
fn comparable_series(frame: &CohortFrame, j: usize, levels: &[String]) -> Vec<(String, Vec<f64>)> {
    let spec = &frame.schema()[j];
    match frame.column(j) {
        Column::Numeric(_) => vec![(spec.name.clone(), frame.observed_numeric(j))],
        Column::Categorical(_) => {
            let obs = frame.observed_levels(j);
            levels
                .iter()
                .map(|l| {
                    let v = obs.iter().map(|o| f64::from(u8::from(*o == l))).collect();
                    (indicator_name(&spec.name, l), v)
                })
                .collect()
        }
    }
}

/// Levels reported for a categorical feature: the less frequent level of a
/// two-level feature (ties to the first in sort order), or all levels.
fn reported_levels(a: &CohortFrame, b: &CohortFrame, j: usize) -> Vec<String> {
    let mut counts = std::collections::BTreeMap::<String, usize>::new();
    for f in [a, b] {
        for l in f.observed_levels(j) {
            *counts.entry(l.to_string()).or_default() += 1;
        }
    }
    if counts.len() == 2 {
        let mut v: Vec<(&String, &usize)> = counts.iter().collect();
        v.sort_by(|x, y| x.1.cmp(y.1).then(x.0.cmp(y.0)));
        vec![v[0].0.clone()]
    } else {
        counts.into_keys().collect()
    }
}

/// One Welch t-test row per numeric and binary feature (binary as 0/1
/// means) and per reported categorical level.
pub fn cohort_comparison_table(a: &CohortFrame, b: &CohortFrame, label_a: &str, label_b: &str) -> Result<CohortTable> {
    if a.schema() != b.schema() {
        return Err(Error::Schema("cohort comparison needs a shared schema".into()));
    }
    let mut rows = Vec::new();
    for (j, spec) in a.schema().iter().enumerate() {
        let levels = if spec.kind == FeatureKind::Categorical {
            reported_levels(a, b, j)
        } else {
            Vec::new()
        };
        let sa = comparable_series(a, j, &levels);
        let sb = comparable_series(b, j, &levels);
        for ((name, va), (_, vb)) in sa.into_iter().zip(sb) {
            let test = welch_ttest(&va, &vb).map_err(|e| match e {
                Error::TooFewRows(m) => Error::TooFewRows(format!("{name}: {m}")),
                other => other,
            })?;
            rows.push(TTestRow {
                feature: name,
                unit: spec.unit.clone(),
                n_a: va.len(),
                n_b: vb.len(),
                test,
            });
        }
    }
    Ok(CohortTable {
        group_a: label_a.to_string(),
        group_b: label_b.to_string(),
        n_a: a.n_rows(),
        n_b: b.n_rows(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureAblation {
    pub feature: String,
    pub repeat_aurocs: Vec<f64>,
    pub mean_auroc: f64,
    /// Mean of paired differences against the baseline repeats.
    pub mean_delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    /// Test AUROC of the full model, drawn as the reference line.
    pub baseline_auroc: f64,
    pub baseline_repeats: Vec<f64>,
    pub n_repeats: usize,
    pub features: Vec<FeatureAblation>,
}

impl AblationResult {
    /// Features ordered by largest mean AUROC drop first.
    pub fn by_drop(&self) -> Vec<&FeatureAblation> {
        let mut v: Vec<&FeatureAblation> = self.features.iter().collect();
        v.sort_by(|a, b| a.mean_delta.total_cmp(&b.mean_delta));
        v
    }
}

/// Leave-one-feature-out ablation.
///
/// `evaluate(removed, repeat)` retrains without `removed` (or with every
/// feature for `None`) and returns a test AUROC for that repeat; repeat `r`
/// must use the same randomness for every feature so deltas are paired.
pub fn ablation<F>(features: &[String], baseline_auroc: f64, n_repeats: usize, evaluate: F) -> Result<AblationResult>
where
    F: Fn(Option<&str>, usize) -> Result<f64> + Sync,
{
    if n_repeats == 0 {
        return Err(Error::InvalidArgument("ablation needs at least one repeat".into()));
    }
    let tasks: Vec<(Option<usize>, usize)> = std::iter::once(None)
        .chain((0..features.len()).map(Some))
        .flat_map(|f| (0..n_repeats).map(move |r| (f, r)))
        .collect();
    let aurocs: Vec<f64> = tasks
        .par_iter()
        .map(|&(f, r)| evaluate(f.map(|j| features[j].as_str()), r))
        .collect::<Result<_>>()?;
    let baseline_repeats = aurocs[..n_repeats].to_vec();
    let features = features
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let reps = aurocs[(j + 1) * n_repeats..(j + 2) * n_repeats].to_vec();
            let deltas: Vec<f64> = reps.iter().zip(&baseline_repeats).map(|(a, b)| a - b).collect();
            FeatureAblation {
                feature: name.clone(),
                mean_auroc: stats::mean(&reps),
                mean_delta: stats::mean(&deltas),
                repeat_aurocs: reps,
            }
        })
        .collect();
    Ok(AblationResult {
        baseline_auroc,
        baseline_repeats,
        n_repeats,
        features,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AleScale {
    Probability,
    Logit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AleKind {
    Numeric,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AleCurve {
    pub feature: String,
    pub kind: AleKind,
    pub scale: AleScale,
    /// Bin edges in model-input units; `[0, 1]` for binary features.
    pub edges: Vec<f64>,
    /// Edges mapped back to the feature's original units, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges_original: Option<Vec<f64>>,
    /// Centered accumulated effect at each edge (binary: at each level).
    pub effects: Vec<f64>,
    /// Rows per bin (binary: rows per level).
    pub counts: Vec<usize>,
}

impl AleCurve {
    /// Count-weighted mean of the per-bin midpoint effects (zero for a
    /// centered curve). Binary curves weight the two levels directly.
    pub fn weighted_mean(&self) -> f64 {
        let total: usize = self.counts.iter().sum();
        let s: f64 = match self.kind {
            AleKind::Numeric => self
                .counts
                .iter()
                .enumerate()
                .map(|(k, &c)| c as f64 * (self.effects[k] + self.effects[k + 1]) / 2.0)
                .sum(),
            AleKind::Binary => self.counts.iter().zip(&self.effects).map(|(&c, e)| c as f64 * e).sum(),
        };
        s / total as f64
    }
}

fn scaled(p: Vec<f64>, scale: AleScale) -> Vec<f64> {
    match scale {
        AleScale::Probability => p,
        AleScale::Logit => p
            .into_iter()
            .map(|v| {
                let v = v.clamp(1e-15, 1.0 - 1e-15);
                (v / (1.0 - v)).ln()
            })
            .collect(),
    }
}

fn with_column(x: ArrayView2<'_, f64>, j: usize, values: &[f64]) -> Array2<f64> {
    let mut m = x.to_owned();
    m.column_mut(j).iter_mut().zip(values).for_each(|(c, v)| *c = *v);
    m
}

/// Deduplicated type-7 quantile edges of `values`.
pub fn quantile_edges(values: &[f64], n_bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (0..=n_bins)
        .map(|k| stats::quantile_sorted(&sorted, k as f64 / n_bins as f64))
        .collect();
    edges.dedup();
    edges
}

/// First-order ALE of column `j` over reference rows `x`.
pub fn ale_first_order(model: &dyn ProbabilityModel, x: ArrayView2<'_, f64>, j: usize, name: &str, n_bins: usize, scale: AleScale) -> Result<AleCurve> {
    if x.nrows() == 0 {
        return Err(Error::EmptyInput("ALE reference data".into()));
    }
    if j >= x.ncols() {
        return Err(Error::UnknownFeature(name.to_string()));
    }
    if n_bins == 0 {
        return Err(Error::InvalidArgument("ALE needs at least one bin".into()));
    }
    let col: Vec<f64> = x.column(j).to_vec();
    let edges = quantile_edges(&col, n_bins);
    if edges.len() < 2 {
        return Err(Error::DegenerateFeature(name.to_string()));
    }
    let b = edges.len() - 1;
    // Bin k holds values in (edges[k], edges[k+1]]; the first bin also
    // takes the minimum.
    let bin: Vec<usize> = col
        .iter()
        .map(|&v| edges[1..].partition_point(|&e| e < v).min(b - 1))
        .collect();
    let lower: Vec<f64> = bin.iter().map(|&k| edges[k]).collect();
    let upper: Vec<f64> = bin.iter().map(|&k| edges[k + 1]).collect();
    let f_lo = scaled(model.predict_proba(with_column(x, j, &lower).view())?, scale);
    let f_hi = scaled(model.predict_proba(with_column(x, j, &upper).view())?, scale);

    let mut sums = vec![0.0; b];
    let mut counts = vec![0usize; b];
    for (i, &k) in bin.iter().enumerate() {
        sums[k] += f_hi[i] - f_lo[i];
        counts[k] += 1;
    }
    let mut acc = vec![0.0; b + 1];
    for k in 0..b {
        let local = if counts[k] > 0 { sums[k] / counts[k] as f64 } else { 0.0 };
        acc[k + 1] = acc[k] + local;
    }
    let total = x.nrows() as f64;
    let center: f64 = (0..b).map(|k| counts[k] as f64 * (acc[k] + acc[k + 1]) / 2.0).sum::<f64>() / total;
    Ok(AleCurve {
        feature: name.to_string(),
        kind: AleKind::Numeric,
        scale,
        edges,
        edges_original: None,
        effects: acc.into_iter().map(|a| a - center).collect(),
        counts,
    })
}

/// Two-level ALE of a 0/1 column: the mean effect of switching it on,
/// centered on the observed level frequencies.
pub fn ale_binary(model: &dyn ProbabilityModel, x: ArrayView2<'_, f64>, j: usize, name: &str, scale: AleScale) -> Result<AleCurve> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyInput("ALE reference data".into()));
    }
    if j >= x.ncols() {
        return Err(Error::UnknownFeature(name.to_string()));
    }
    let col = x.column(j);
    if col.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument(format!("{name} is not a 0/1 column")));
    }
    let n1 = col.iter().filter(|&&v| v == 1.0).count();
    let f0 = scaled(model.predict_proba(with_column(x, j, &vec![0.0; n]).view())?, scale);
    let f1 = scaled(model.predict_proba(with_column(x, j, &vec![1.0; n]).view())?, scale);
    let effect = f1.iter().zip(&f0).map(|(a, b)| a - b).sum::<f64>() / n as f64;
    let p1 = n1 as f64 / n as f64;
    let p0 = 1.0 - p1;
    Ok(AleCurve {
        feature: name.to_string(),
        kind: AleKind::Binary,
        scale,
        edges: vec![0.0, 1.0],
        edges_original: None,
        effects: vec![-effect * p1, effect * p0],
        counts: vec![n - n1, n1],
    })
}
