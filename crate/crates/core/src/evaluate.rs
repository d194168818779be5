//! Metric reports with bootstrap intervals and cross-validated grid search
//! with SMOTE confined to training folds.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, RocPoint};
use crate::models::{self, Family, HyperValue, Hyperparameters, ModelArtifact, ModelSpec, ProbabilityModel};
use crate::preprocess::Design;
use crate::resample::{self, SmoteConfig};
use crate::rng::{derive_seed, tag};
use crate::stats;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_BOOTSTRAP: usize = 2000;
pub const DEFAULT_ALPHA: f64 = 0.05;

/// One row of a performance table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub n: usize,
    pub auroc: f64,
    pub auroc_ci: (f64, f64),
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub threshold: f64,
    pub bootstrap_replicates: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub threshold: f64,
    pub bootstrap_replicates: usize,
    pub alpha: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            threshold: DEFAULT_THRESHOLD,
            bootstrap_replicates: DEFAULT_BOOTSTRAP,
            alpha: DEFAULT_ALPHA,
        }
    }
}

pub fn metric_report(model: &str, scores: &[f64], labels: &[u8], settings: &EvalSettings, seed: u64) -> Result<MetricReport> {
    let auroc = metrics::auroc(scores, labels)?;
    let auroc_ci = metrics::bootstrap_ci(scores, labels, metrics::auroc, settings.bootstrap_replicates, settings.alpha, seed)?;
    let c = metrics::confusion_metrics(scores, labels, settings.threshold)?;
    Ok(MetricReport {
        model: model.to_string(),
        n: labels.len(),
        auroc,
        auroc_ci,
        accuracy: c.accuracy,
        f1: c.f1,
        sensitivity: c.sensitivity,
        specificity: c.specificity,
        ppv: c.ppv,
        npv: c.npv,
        threshold: settings.threshold,
        bootstrap_replicates: settings.bootstrap_replicates,
    })
}

/// Scores a model on a design and returns the report and its ROC points.
pub fn evaluate_model(
    name: &str,
    model: &dyn ProbabilityModel,
    design: &Design,
    settings: &EvalSettings,
    seed: u64,
) -> Result<(MetricReport, Vec<RocPoint>)> {
    let scores = model.predict_proba(design.x.view())?;
    let report = metric_report(name, &scores, &design.y, settings, seed)?;
    Ok((report, metrics::roc_curve(&scores, &design.y)?))
}

/// Candidate values per hyperparameter.
pub type Grid = BTreeMap<String, Vec<HyperValue>>;

/// Cartesian product of a grid over its sorted keys, last key fastest.
pub fn expand_grid(grid: &Grid) -> Vec<Hyperparameters> {
    let mut points = vec![Hyperparameters::new()];
    for (name, values) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.insert(name.clone(), v.clone());
                    q
                })
            })
            .collect();
    }
    points
}

fn g(pairs: &[(&str, &[HyperValue])]) -> Grid {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect()
}

fn nums(v: &[f64]) -> Vec<HyperValue> {
    v.iter().map(|&x| HyperValue::Number(x)).collect()
}

fn texts(v: &[&str]) -> Vec<HyperValue> {
    v.iter().map(|&x| HyperValue::Text(x.to_string())).collect()
}

/// Default search grids. These are modest lattices around common
/// settings, sized to keep a full run within minutes on one core.
pub fn default_grid(family: Family) -> Grid {
    match family {
        Family::Logistic => g(&[("C", &nums(&[0.01, 0.1, 1.0, 10.0])), ("penalty", &texts(&["l1", "l2"]))]),
        Family::GbdtLevelwise | Family::GbdtOrdered => g(&[
            ("learning_rate", &nums(&[0.05, 0.1])),
            ("max_depth", &nums(&[2.0, 3.0])),
            ("n_estimators", &nums(&[100.0])),
            ("subsample", &nums(&[0.8, 1.0])),
        ]),
        Family::GbdtLeafwise => g(&[
            ("learning_rate", &nums(&[0.05, 0.1])),
            ("max_leaves", &nums(&[4.0, 8.0])),
            ("n_estimators", &nums(&[100.0])),
            ("subsample", &nums(&[0.8, 1.0])),
        ]),
        Family::RandomForest => g(&[("max_depth", &nums(&[0.0, 8.0])), ("n_estimators", &nums(&[200.0]))]),
        Family::Knn => g(&[
            ("k", &nums(&[5.0, 15.0, 31.0])),
            ("metric", &texts(&["euclidean", "manhattan"])),
            ("weighting", &texts(&["uniform", "distance"])),
        ]),
        Family::GaussianNb => g(&[("var_floor", &nums(&[1e-9]))]),
        Family::Mlp => g(&[("dropout_rate", &nums(&[0.0, 0.2])), ("hidden_units", &nums(&[16.0, 32.0]))]),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPointResult {
    pub hyperparameters: Hyperparameters,
    pub fold_auroc: Vec<f64>,
    /// `None` where a fold produced no positive predictions.
    pub fold_f1: Vec<Option<f64>>,
    pub mean_auroc: f64,
    pub sd_auroc: f64,
    /// Mean over folds where F1 is defined.
    pub mean_f1: Option<f64>,
    pub sd_f1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub family: Family,
    pub fold_count: usize,
    pub points: Vec<GridPointResult>,
    pub best_index: usize,
    pub best: Hyperparameters,
}

/// Seed of the model fitted in fold `fold` for `family`; shared by every
/// grid point so points are compared on equal footing.
pub fn cv_model_seed(seed: u64, family: Family, fold: usize) -> u64 {
    derive_seed(seed, tag(family.key()), fold as u64)
}

/// Better of two grid points: higher mean AUROC, then higher mean F1,
/// then the earlier point.
fn better(a: &GridPointResult, b: &GridPointResult) -> bool {
    if a.mean_auroc != b.mean_auroc {
        return a.mean_auroc > b.mean_auroc;
    }
    match (a.mean_f1, b.mean_f1) {
        (Some(x), Some(y)) => x > y,
        (Some(_), None) => true,
        _ => false,
    }
}

/// Grid search with stratified k-fold CV on the training design. Each
/// fold's training part is oversampled from its own rows only; validation
/// folds are scored untouched.
pub fn grid_search_cv(
    family: Family,
    grid: &Grid,
    train: &Design,
    folds: &[usize],
    k: usize,
    smote: Option<&SmoteConfig>,
    threshold: f64,
    seed: u64,
) -> Result<CvResult> {
    let points = expand_grid(grid);
    if points.is_empty() || grid.values().any(|v| v.is_empty()) {
        return Err(Error::Config(format!("empty grid for {family}")));
    }
    for p in &points {
        ModelSpec {
            family,
            hyperparameters: p.clone(),
            seed,
        }
        .resolved()?;
    }
    let fold_data = resample::balance_training_folds(train, folds, k, smote)?;
    let tasks: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..k).map(move |f| (p, f))).collect();
    let scores: Vec<(f64, Option<f64>)> = tasks
        .par_iter()
        .map(|&(p, f)| {
            let fd = &fold_data[f];
            let spec = ModelSpec {
                family,
                hyperparameters: points[p].clone(),
                seed: cv_model_seed(seed, family, f),
            };
            let model = models::fit(&spec, fd.train.x.view(), &fd.train.y)?;
            let s = models::predict_proba(&model, fd.validation.x.view())?;
            let auc = metrics::auroc(&s, &fd.validation.y)?;
            let f1 = metrics::confusion_metrics(&s, &fd.validation.y, threshold)?.f1;
            Ok((auc, f1))
        })
        .collect::<Result<_>>()?;

    let results: Vec<GridPointResult> = points
        .into_iter()
        .enumerate()
        .map(|(p, hp)| {
            let chunk = &scores[p * k..(p + 1) * k];
            let fold_auroc: Vec<f64> = chunk.iter().map(|s| s.0).collect();
            let fold_f1: Vec<Option<f64>> = chunk.iter().map(|s| s.1).collect();
            let defined: Vec<f64> = fold_f1.iter().flatten().copied().collect();
            GridPointResult {
                hyperparameters: hp,
                mean_auroc: stats::mean(&fold_auroc),
                sd_auroc: stats::sample_sd(&fold_auroc),
                mean_f1: (!defined.is_empty()).then(|| stats::mean(&defined)),
                sd_f1: (!defined.is_empty()).then(|| stats::sample_sd(&defined)),
                fold_auroc,
                fold_f1,
            }
        })
        .collect();
    let mut best_index = 0;
    for (i, r) in results.iter().enumerate().skip(1) {
        if better(r, &results[best_index]) {
            best_index = i;
        }
    }
    Ok(CvResult {
        family,
        fold_count: k,
        best: results[best_index].hyperparameters.clone(),
        points: results,
        best_index,
    })
}

/// Fits the final model on the full training design, oversampling first
/// when `smote` is given.
pub fn fit_final(spec: &ModelSpec, train: &Design, smote: Option<&SmoteConfig>) -> Result<ModelArtifact> {
    match smote {
        Some(cfg) => {
            let (aug, _) = resample::oversample(train, cfg)?;
            models::fit(spec, aug.x.view(), &aug.y)
        }
        None => models::fit(spec, train.x.view(), &train.y),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_expansion_is_sorted_cartesian() {
        let pts = expand_grid(&default_grid(Family::Logistic));
        assert_eq!(pts.len(), 8);
        assert_eq!(pts[0]["C"], HyperValue::Number(0.01));
        assert_eq!(pts[0]["penalty"], HyperValue::Text("l1".into()));
        assert_eq!(pts[1]["penalty"], HyperValue::Text("l2".into()));
        assert_eq!(pts[2]["C"], HyperValue::Number(0.1));
    }

    #[test]
    fn default_grids_validate() {
        for f in Family::ALL {
            for p in expand_grid(&default_grid(f)) {
                ModelSpec {
                    family: f,
                    hyperparameters: p,
                    seed: 0,
                }
                .resolved()
                .unwrap();
            }
        }
    }

    #[test]
    fn report_on_perfect_scores() {
        let s = [0.1, 0.2, 0.3, 0.7, 0.8, 0.9];
        let y = [0, 0, 0, 1, 1, 1];
        let settings = EvalSettings {
            bootstrap_replicates: 100,
            ..Default::default()
        };
        let r = metric_report("m", &s, &y, &settings, 0).unwrap();
        assert_eq!(r.auroc, 1.0);
        assert_eq!(r.auroc_ci, (1.0, 1.0));
        assert_eq!(r.f1, Some(1.0));
    }
}
