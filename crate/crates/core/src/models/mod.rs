//! Probabilistic binary classifiers behind one fit / predict-probability
//! contract.
//!
//! Every family declares a hyperparameter surface (names, defaults, ranges).
//! A [`ModelSpec`] is validated against it before fitting, and the resulting
//! [`ModelArtifact`] serializes to a versioned JSON document from which
//! predictions reload bit-exactly.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod forest;
pub mod gbdt;
pub mod knn;
pub mod logistic;
pub mod mlp;
pub mod naive_bayes;
pub mod tree;

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Logistic,
    GbdtLeafwise,
    GbdtLevelwise,
    GbdtOrdered,
    RandomForest,
    Knn,
    GaussianNb,
    Mlp,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::GbdtOrdered,
        Family::GbdtLeafwise,
        Family::GbdtLevelwise,
        Family::Logistic,
        Family::Knn,
        Family::GaussianNb,
        Family::Mlp,
        Family::RandomForest,
    ];

    /// The seven-model comparison: three boosting variants, logistic
    /// regression, KNN, naive Bayes and a one-hidden-layer network.
    pub const SEVEN: [Family; 7] = [
        Family::GbdtOrdered,
        Family::GbdtLeafwise,
        Family::GbdtLevelwise,
        Family::Logistic,
        Family::Knn,
        Family::GaussianNb,
        Family::Mlp,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Family::Logistic => "logistic",
            Family::GbdtLeafwise => "gbdt_leafwise",
            Family::GbdtLevelwise => "gbdt_levelwise",
            Family::GbdtOrdered => "gbdt_ordered",
            Family::RandomForest => "random_forest",
            Family::Knn => "knn",
            Family::GaussianNb => "gaussian_nb",
            Family::Mlp => "mlp",
        }
    }

    /// Row label used in metric tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Family::Logistic => "LogisticRegression",
            Family::GbdtLeafwise => "GBDT-LeafWise",
            Family::GbdtLevelwise => "GBDT-LevelWise",
            Family::GbdtOrdered => "GBDT-Ordered",
            Family::RandomForest => "RandomForest",
            Family::Knn => "KNN",
            Family::GaussianNb => "NaiveBayes",
            Family::Mlp => "NeuralNet",
        }
    }

    pub fn is_gbdt(self) -> bool {
        matches!(self, Family::GbdtLeafwise | Family::GbdtLevelwise | Family::GbdtOrdered)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.key() == s)
            .ok_or_else(|| Error::Config(format!("unknown model family {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperValue {
    Number(f64),
    Text(String),
}

impl From<f64> for HyperValue {
    fn from(v: f64) -> Self {
        HyperValue::Number(v)
    }
}

impl From<&str> for HyperValue {
    fn from(v: &str) -> Self {
        HyperValue::Text(v.to_string())
    }
}

impl fmt::Display for HyperValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperValue::Number(v) => write!(f, "{v}"),
            HyperValue::Text(s) => f.write_str(s),
        }
    }
}

pub type Hyperparameters = BTreeMap<String, HyperValue>;

#[derive(Clone, Copy, Debug)]
enum Domain {
    Real { min: f64, max: f64, min_open: bool },
    Int { min: i64, max: i64 },
    Choice(&'static [&'static str]),
}

#[derive(Clone, Debug)]
struct ParamDecl {
    name: &'static str,
    default: HyperValue,
    domain: Domain,
}

fn real(name: &'static str, default: f64, min: f64, max: f64, min_open: bool) -> ParamDecl {
    ParamDecl {
        name,
        default: HyperValue::Number(default),
        domain: Domain::Real { min, max, min_open },
    }
}

fn int(name: &'static str, default: i64, min: i64, max: i64) -> ParamDecl {
    ParamDecl {
        name,
        default: HyperValue::Number(default as f64),
        domain: Domain::Int { min, max },
    }
}

fn choice(name: &'static str, default: &'static str, options: &'static [&'static str]) -> ParamDecl {
    ParamDecl {
        name,
        default: HyperValue::Text(default.to_string()),
        domain: Domain::Choice(options),
    }
}

fn surface(family: Family) -> Vec<ParamDecl> {
    let inf = f64::INFINITY;
    match family {
        Family::Logistic => vec![
            choice("penalty", "l2", &["l1", "l2"]),
            real("C", 1.0, 0.0, inf, true),
            int("max_iter", 10_000, 1, 10_000_000),
            real("tol", 1e-6, 0.0, 1.0, true),
        ],
        Family::GbdtLeafwise | Family::GbdtLevelwise | Family::GbdtOrdered => {
            let mut v = vec![
                real("learning_rate", 0.1, 0.0, 1.0, false),
                int("max_depth", if family == Family::GbdtLeafwise { 6 } else { 3 }, 1, 64),
                int("n_estimators", 100, 1, 100_000),
                real("subsample", 1.0, 0.0, 1.0, true),
                real("reg_alpha", 0.0, 0.0, inf, false),
                real("reg_lambda", 1.0, 0.0, inf, false),
                real("min_child_weight", 1.0, 0.0, inf, false),
            ];
            if family == Family::GbdtLeafwise {
                v.push(int("max_leaves", 8, 2, 65_536));
            }
            v
        }
        Family::RandomForest => vec![
            int("n_estimators", 200, 1, 100_000),
            int("max_depth", 0, 0, 1_000),
            int("min_samples_leaf", 1, 1, 1_000_000),
            choice("max_features", "sqrt", &["sqrt", "log2", "all"]),
        ],
        Family::Knn => vec![
            int("k", 5, 1, 1_000_000),
            choice("metric", "euclidean", &["euclidean", "manhattan"]),
            choice("weighting", "uniform", &["uniform", "distance"]),
        ],
        Family::GaussianNb => vec![real("var_floor", 1e-9, 0.0, inf, true)],
        Family::Mlp => vec![
            int("hidden_units", 32, 1, 65_536),
            real("learning_rate", 1e-3, 0.0, 1.0, true),
            int("batch_size", 32, 1, 1_000_000),
            real("dropout_rate", 0.0, 0.0, 1.0 - f64::EPSILON, false),
            int("epochs", 200, 1, 1_000_000),
            int("patience", 0, 0, 1_000_000),
        ],
    }
}

/// Default hyperparameters of a family.
pub fn defaults(family: Family) -> Hyperparameters {
    surface(family)
        .into_iter()
        .map(|d| (d.name.to_string(), d.default))
        .collect()
}

/// Hyperparameter names a family accepts.
pub fn surface_names(family: Family) -> Vec<&'static str> {
    surface(family).into_iter().map(|d| d.name).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Family,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: Family, seed: u64) -> Self {
        ModelSpec {
            family,
            hyperparameters: Hyperparameters::new(),
            seed,
        }
    }

    pub fn with(mut self, name: &str, value: impl Into<HyperValue>) -> Self {
        self.hyperparameters.insert(name.to_string(), value.into());
        self
    }

    /// Fills defaults and checks every value against the family surface.
    pub fn resolved(&self) -> Result<Hyperparameters> {
        let decls = surface(self.family);
        for name in self.hyperparameters.keys() {
            if !decls.iter().any(|d| d.name == name) {
                return Err(Error::Config(format!("{} has no hyperparameter {name:?}", self.family)));
            }
        }
        let mut out = Hyperparameters::new();
        for d in decls {
            let v = self.hyperparameters.get(d.name).cloned().unwrap_or(d.default);
            let ok = match (&v, d.domain) {
                (HyperValue::Number(x), Domain::Real { min, max, min_open }) => {
                    x.is_finite() && *x <= max && if min_open { *x > min } else { *x >= min }
                }
                (HyperValue::Number(x), Domain::Int { min, max }) => {
                    x.fract() == 0.0 && *x >= min as f64 && *x <= max as f64
                }
                (HyperValue::Text(s), Domain::Choice(opts)) => opts.contains(&s.as_str()),
                _ => false,
            };
            if !ok {
                return Err(Error::Config(format!("{}: invalid value {v} for {:?}", self.family, d.name)));
            }
            out.insert(d.name.to_string(), v);
        }
        Ok(out)
    }
}

pub(crate) fn num(h: &Hyperparameters, name: &str) -> f64 {
    match h.get(name) {
        Some(HyperValue::Number(x)) => *x,
        other => panic!("resolved hyperparameter {name:?} is not numeric: {other:?}"),
    }
}

pub(crate) fn text<'a>(h: &'a Hyperparameters, name: &str) -> &'a str {
    match h.get(name) {
        Some(HyperValue::Text(s)) => s,
        other => panic!("resolved hyperparameter {name:?} is not text: {other:?}"),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub converged: bool,
    pub iterations: usize,
    pub final_loss: f64,
    /// Per-round training loss, for iterative families that record it.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loss_history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Params {
    Logistic(logistic::LogisticModel),
    Gbdt(gbdt::GbdtModel),
    Forest(forest::ForestModel),
    Knn(knn::KnnModel),
    GaussianNb(naive_bayes::GaussianNbModel),
    Mlp(mlp::MlpModel),
}

/// Anything that maps a feature matrix to probabilities of the positive
/// class.
pub trait ProbabilityModel {
    fn n_features(&self) -> usize;
    fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub family: Family,
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
    pub meta: TrainingMeta,
    pub params: Params,
}

impl ModelArtifact {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<ModelArtifact> {
        let a: ModelArtifact = serde_json::from_str(s)?;
        if a.format_version != ARTIFACT_FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported artifact format version {}", a.format_version)));
        }
        Ok(a)
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            family: self.family,
            hyperparameters: self.hyperparameters.clone(),
            seed: self.seed,
        }
    }
}

impl ProbabilityModel for ModelArtifact {
    fn n_features(&self) -> usize {
        self.meta.d
    }

    fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        predict_proba(self, x)
    }
}

pub(crate) fn check_training_input(x: &ArrayView2<'_, f64>, y: &[u8]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidArgument(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training matrix".into()));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::DegenerateLabels);
    }
    Ok(())
}

pub(crate) fn check_predict_input(x: &ArrayView2<'_, f64>, d: usize) -> Result<()> {
    if x.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: x.ncols(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("prediction matrix".into()));
    }
    Ok(())
}

/// Standard-layout copy of a view, for fast row slicing.
pub(crate) fn contiguous(x: ArrayView2<'_, f64>) -> Array2<f64> {
    x.as_standard_layout().into_owned()
}

pub fn fit(spec: &ModelSpec, x: ArrayView2<'_, f64>, y: &[u8]) -> Result<ModelArtifact> {
    let hp = spec.resolved()?;
    check_training_input(&x, y)?;
    let (params, meta) = match spec.family {
        Family::Logistic => {
            let (m, meta) = logistic::fit(&hp, x, y, spec.seed)?;
            (Params::Logistic(m), meta)
        }
        Family::GbdtLeafwise | Family::GbdtLevelwise | Family::GbdtOrdered => {
            let (m, meta) = gbdt::fit(spec.family, &hp, x, y, spec.seed)?;
            (Params::Gbdt(m), meta)
        }
        Family::RandomForest => {
            let (m, meta) = forest::fit(&hp, x, y, spec.seed)?;
            (Params::Forest(m), meta)
        }
        Family::Knn => {
            let (m, meta) = knn::fit(&hp, x, y, spec.seed)?;
            (Params::Knn(m), meta)
        }
        Family::GaussianNb => {
            let (m, meta) = naive_bayes::fit(&hp, x, y, spec.seed)?;
            (Params::GaussianNb(m), meta)
        }
        Family::Mlp => {
            let (m, meta) = mlp::fit(&hp, x, y, spec.seed)?;
            (Params::Mlp(m), meta)
        }
    };
    Ok(ModelArtifact {
        format_version: ARTIFACT_FORMAT_VERSION,
        family: spec.family,
        hyperparameters: hp,
        seed: spec.seed,
        meta,
        params,
    })
}

pub fn predict_proba(m: &ModelArtifact, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    check_predict_input(&x, m.meta.d)?;
    let p = match &m.params {
        Params::Logistic(p) => p.predict_proba(x),
        Params::Gbdt(p) => p.predict_proba(x),
        Params::Forest(p) => p.predict_proba(x),
        Params::Knn(p) => p.predict_proba(x),
        Params::GaussianNb(p) => p.predict_proba(x),
        Params::Mlp(p) => p.predict_proba(x),
    };
    Ok(p)
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean binary cross-entropy of logits `z` against labels.
pub fn logit_loss(z: &[f64], y: &[u8]) -> f64 {
    let s: f64 = z.iter().zip(y).map(|(&z, &y)| softplus(z) - f64::from(y) * z).sum();
    s / z.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolved_fills_defaults_and_rejects_unknown() {
        let hp = ModelSpec::new(Family::Logistic, 0).resolved().unwrap();
        assert_eq!(hp["penalty"], HyperValue::Text("l2".into()));
        assert!(ModelSpec::new(Family::Logistic, 0).with("lambda", 1.0).resolved().is_err());
        assert!(ModelSpec::new(Family::Logistic, 0).with("C", 0.0).resolved().is_err());
        assert!(ModelSpec::new(Family::Knn, 0).with("k", 2.5).resolved().is_err());
        assert!(ModelSpec::new(Family::Knn, 0).with("metric", "cosine").resolved().is_err());
        assert!(ModelSpec::new(Family::Mlp, 0).with("dropout_rate", 1.0).resolved().is_err());
        assert!(ModelSpec::new(Family::GbdtLevelwise, 0).with("subsample", 0.0).resolved().is_err());
        assert!(ModelSpec::new(Family::GbdtLevelwise, 0).with("max_leaves", 4.0).resolved().is_err());
    }

    #[test]
    fn family_round_trips_through_str() {
        for f in Family::ALL {
            assert_eq!(f.key().parse::<Family>().unwrap(), f);
        }
    }

    #[test]
    fn sigmoid_softplus_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
    }
}
