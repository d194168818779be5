//! Train-only preprocessing: temporal aggregation, missingness filtering,
//! median/mode imputation, categorical encoding and z-scoring.
//!
//! Every `fit` function takes only the training frame; applying the fitted
//! state to another frame never reads statistics from it.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cohort::{CohortFrame, Column, DomainTag, FeatureKind, FeatureSpec};
use crate::error::{Error, Result};
use crate::stats;

/// Default window over which within-stay measurements are aggregated.
pub const DEFAULT_WINDOW_HOURS: f64 = 48.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalSeries {
    pub feature: String,
    /// `(hours since admission, value)`, ordered by time.
    pub measurements: Vec<(f64, f64)>,
}

impl TemporalSeries {
    pub fn check(&self, window_hours: f64) -> Result<()> {
        let mut last = 0.0;
        for &(t, v) in &self.measurements {
            if !(0.0..=window_hours).contains(&t) || t < last {
                return Err(Error::InvalidArgument(format!(
                    "{}: time offset {t} out of order or outside [0, {window_hours}]",
                    self.feature
                )));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(self.feature.clone()));
            }
            last = t;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalAggregate {
    pub mean: f64,
    pub cv: f64,
    pub iqr: f64,
}

/// Mean, coefficient of variation (sample SD / mean) and interquartile
/// range of a measurement series.
pub fn aggregate_temporal(series: &TemporalSeries) -> Result<TemporalAggregate> {
    let values: Vec<f64> = series.measurements.iter().map(|&(_, v)| v).collect();
    aggregate_values(&values)
}

pub fn aggregate_values(values: &[f64]) -> Result<TemporalAggregate> {
    if values.is_empty() {
        return Err(Error::EmptyInput("temporal series".into()));
    }
    let mean = stats::mean(values);
    if values.len() == 1 {
        return Ok(TemporalAggregate { mean, cv: 0.0, iqr: 0.0 });
    }
    if mean == 0.0 {
        return Err(Error::ZeroMean);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = stats::quantile_sorted(&sorted, 0.75) - stats::quantile_sorted(&sorted, 0.25);
    Ok(TemporalAggregate {
        mean,
        cv: stats::sample_sd(values) / mean,
        iqr,
    })
}

/// One long-format measurement row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalRecord {
    pub row_id: String,
    pub feature: String,
    pub time_h: f64,
    pub value: f64,
}

/// Reads `row_id,feature,time_h,value` records.
pub fn load_temporal_csv(path: impl AsRef<Path>) -> Result<Vec<TemporalRecord>> {
    let mut rdr = csv::Reader::from_path(path.as_ref())?;
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Appends `<feature>_mean`, `<feature>_cv` and `<feature>_iqr` columns
/// computed from measurements inside `[0, window_hours]`. Stays without
/// measurements, and CVs whose mean is zero, are left missing.
pub fn expand_temporal(frame: &CohortFrame, records: &[TemporalRecord], window_hours: f64, domain: DomainTag) -> Result<CohortFrame> {
    let index: BTreeMap<&str, usize> = frame.row_ids().iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
    let mut by_feature: BTreeMap<&str, Vec<Vec<(f64, f64)>>> = BTreeMap::new();
    for r in records {
        if !(0.0..=window_hours).contains(&r.time_h) {
            continue;
        }
        let Some(&row) = index.get(r.row_id.as_str()) else {
            continue;
        };
        let slots = by_feature
            .entry(r.feature.as_str())
            .or_insert_with(|| vec![Vec::new(); frame.n_rows()]);
        slots[row].push((r.time_h, r.value));
    }

    let mut out = frame.clone();
    for (feature, per_row) in by_feature {
        let n = frame.n_rows();
        let mut cols = [vec![f64::NAN; n], vec![f64::NAN; n], vec![f64::NAN; n]];
        let mut masks = [vec![true; n], vec![true; n], vec![true; n]];
        for (i, mut ms) in per_row.into_iter().enumerate() {
            if ms.is_empty() {
                continue;
            }
            ms.sort_by(|a, b| a.0.total_cmp(&b.0));
            let series = TemporalSeries {
                feature: feature.to_string(),
                measurements: ms,
            };
            series.check(window_hours)?;
            let values: Vec<f64> = series.measurements.iter().map(|m| m.1).collect();
            let mean = stats::mean(&values);
            cols[0][i] = mean;
            masks[0][i] = false;
            match aggregate_values(&values) {
                Ok(a) => {
                    cols[1][i] = a.cv;
                    masks[1][i] = false;
                    cols[2][i] = a.iqr;
                    masks[2][i] = false;
                }
                Err(Error::ZeroMean) => {
                    let mut sorted = values.clone();
                    sorted.sort_by(f64::total_cmp);
                    cols[2][i] = stats::quantile_sorted(&sorted, 0.75) - stats::quantile_sorted(&sorted, 0.25);
                    masks[2][i] = false;
                }
                Err(e) => return Err(e),
            }
        }
        for (k, suffix) in ["mean", "cv", "iqr"].iter().enumerate() {
            let spec = FeatureSpec::new(&format!("{feature}_{suffix}"), FeatureKind::Numeric, domain, "");
            out = out.with_added_column(spec, Column::Numeric(cols[k].clone()), masks[k].clone())?;
        }
    }
    Ok(out)
}

/// Removes features whose missing fraction is strictly greater than
/// `threshold`.
pub fn drop_high_missingness(frame: &CohortFrame, threshold: f64) -> Result<(CohortFrame, Vec<String>)> {
    let dropped = high_missingness_features(frame, threshold)?;
    Ok((frame.drop_features(&dropped), dropped))
}

pub fn high_missingness_features(frame: &CohortFrame, threshold: f64) -> Result<Vec<String>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!("missingness threshold {threshold} not in (0, 1]")));
    }
    let n = frame.n_rows().max(1) as f64;
    Ok(frame
        .schema()
        .iter()
        .enumerate()
        .filter(|(j, _)| frame.missing(*j).iter().filter(|&&m| m).count() as f64 / n > threshold)
        .map(|(_, f)| f.name.clone())
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeValue {
    Median(f64),
    Mode(f64),
    Level(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Imputer {
    pub values: Vec<(String, ImputeValue)>,
}

impl Imputer {
    /// Medians for numeric features, modes for binary and categorical ones.
    /// Mode ties go to the smallest value (0 before 1, lexicographic levels).
    pub fn fit(train: &CohortFrame) -> Result<Imputer> {
        let mut values = Vec::with_capacity(train.n_features());
        for (j, spec) in train.schema().iter().enumerate() {
            let v = match spec.kind {
                FeatureKind::Numeric => {
                    let obs = train.observed_numeric(j);
                    if obs.is_empty() {
                        return Err(Error::UnfittableFeature(spec.name.clone()));
                    }
                    ImputeValue::Median(stats::median(&obs)?)
                }
                FeatureKind::Binary => {
                    let obs = train.observed_numeric(j);
                    if obs.is_empty() {
                        return Err(Error::UnfittableFeature(spec.name.clone()));
                    }
                    let ones = obs.iter().filter(|&&x| x == 1.0).count();
                    ImputeValue::Mode(if 2 * ones > obs.len() { 1.0 } else { 0.0 })
                }
                FeatureKind::Categorical => {
                    let obs = train.observed_levels(j);
                    if obs.is_empty() {
                        return Err(Error::UnfittableFeature(spec.name.clone()));
                    }
                    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                    for l in obs {
                        *counts.entry(l).or_default() += 1;
                    }
                    // Level order iteration: the first maximum wins ties.
                    let best = counts
                        .iter()
                        .fold(None::<(&str, usize)>, |acc, (&l, &c)| match acc {
                            Some((_, bc)) if bc >= c => acc,
                            _ => Some((l, c)),
                        })
                        .map(|(l, _)| l.to_string())
                        .unwrap_or_default();
                    ImputeValue::Level(best)
                }
            };
            values.push((spec.name.clone(), v));
        }
        Ok(Imputer { values })
    }

    pub fn apply(&self, frame: &CohortFrame) -> Result<CohortFrame> {
        check_names(frame, self.values.iter().map(|(n, _)| n))?;
        let mut out = frame.clone();
        for (j, (_, value)) in self.values.iter().enumerate() {
            let mask = frame.missing(j);
            if !mask.iter().any(|&m| m) {
                continue;
            }
            let col = match (frame.column(j), value) {
                (Column::Numeric(v), ImputeValue::Median(x) | ImputeValue::Mode(x)) => {
                    Column::Numeric(v.iter().zip(mask).map(|(&a, &m)| if m { *x } else { a }).collect())
                }
                (Column::Categorical(v), ImputeValue::Level(l)) => {
                    Column::Categorical(v.iter().zip(mask).map(|(a, &m)| if m { l.clone() } else { a.clone() }).collect())
                }
                _ => return Err(Error::Schema(format!("imputer kind mismatch for {:?}", frame.schema()[j].name))),
            };
            out = out.with_column(j, col, vec![false; frame.n_rows()])?;
        }
        Ok(out)
    }
}

fn check_names<'a>(frame: &CohortFrame, names: impl Iterator<Item = &'a String>) -> Result<()> {
    let names: Vec<&String> = names.collect();
    let ok = names.len() == frame.n_features() && names.iter().zip(frame.schema()).all(|(a, b)| **a == b.name);
    if ok {
        Ok(())
    } else {
        Err(Error::Schema("frame schema does not match the fitted transform".into()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalEncoding {
    pub feature: String,
    /// Levels observed at fit time, sorted.
    pub levels: Vec<String>,
    /// Levels that receive an indicator column, in output order. A two-level
    /// feature keeps a single indicator for its less frequent level.
    pub indicators: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub encodings: Vec<CategoricalEncoding>,
}

pub fn indicator_name(feature: &str, level: &str) -> String {
    format!("{feature}={level}")
}

impl Encoder {
    pub fn fit(train: &CohortFrame) -> Encoder {
        let mut encodings = Vec::new();
        for (j, spec) in train.schema().iter().enumerate() {
            if spec.kind != FeatureKind::Categorical {
                continue;
            }
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for l in train.observed_levels(j) {
                *counts.entry(l.to_string()).or_default() += 1;
            }
            let levels: Vec<String> = counts.keys().cloned().collect();
            let indicators = if levels.len() == 2 {
                let (a, b) = (&levels[0], &levels[1]);
                vec![if counts[b] < counts[a] { b.clone() } else { a.clone() }]
            } else {
                levels.clone()
            };
            encodings.push(CategoricalEncoding {
                feature: spec.name.clone(),
                levels,
                indicators,
            });
        }
        Encoder { encodings }
    }

    /// Replaces each categorical column with binary indicator columns.
    /// Unseen levels encode as all zeros and produce a warning.
    pub fn apply(&self, frame: &CohortFrame) -> Result<(CohortFrame, Vec<String>)> {
        let mut schema = Vec::new();
        let mut columns = Vec::new();
        let mut masks = Vec::new();
        let mut warnings = Vec::new();
        for (j, spec) in frame.schema().iter().enumerate() {
            if spec.kind != FeatureKind::Categorical {
                schema.push(spec.clone());
                columns.push(frame.column(j).clone());
                masks.push(frame.missing(j).to_vec());
                continue;
            }
            let enc = self
                .encodings
                .iter()
                .find(|e| e.feature == spec.name)
                .ok_or_else(|| Error::Schema(format!("no encoding fitted for {:?}", spec.name)))?;
            let Column::Categorical(values) = frame.column(j) else {
                unreachable!("categorical kind stores strings")
            };
            let mask = frame.missing(j);
            for (i, v) in values.iter().enumerate() {
                if !mask[i] && !enc.levels.contains(v) {
                    warnings.push(format!("{}: unseen level {v:?} in row {} encoded as all zeros", spec.name, i + 1));
                }
            }
            for level in &enc.indicators {
                schema.push(FeatureSpec::new(
                    &indicator_name(&spec.name, level),
                    FeatureKind::Binary,
                    spec.domain,
                    &spec.unit,
                ));
                columns.push(Column::Numeric(
                    values.iter().zip(mask).map(|(v, &m)| if !m && v == level { 1.0 } else { 0.0 }).collect(),
                ));
                masks.push(mask.to_vec());
            }
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        let out = CohortFrame::new(schema, columns, masks, frame.outcome().to_vec(), frame.row_ids().to_vec())?;
        Ok((out, warnings))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub feature: String,
    pub mu: f64,
    pub sigma: f64,
    /// Set when the training SD is zero; such features map to 0.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub params: Vec<ScaleParams>,
}

impl Scaler {
    /// Fits `(mu, sample sigma)` for every numeric-kind feature. Binary
    /// columns are left unscaled.
    pub fn fit(train: &CohortFrame) -> Result<Scaler> {
        let mut params = Vec::new();
        for (j, spec) in train.schema().iter().enumerate() {
            if spec.kind != FeatureKind::Numeric {
                continue;
            }
            if train.missing(j).iter().any(|&m| m) {
                return Err(Error::InvalidArgument(format!("{:?} has missing cells; impute before scaling", spec.name)));
            }
            let obs = train.observed_numeric(j);
            if obs.is_empty() {
                return Err(Error::UnfittableFeature(spec.name.clone()));
            }
            let sigma = stats::sample_sd(&obs);
            params.push(ScaleParams {
                feature: spec.name.clone(),
                mu: stats::mean(&obs),
                sigma,
                degenerate: sigma == 0.0,
            });
        }
        Ok(Scaler { params })
    }

    pub fn apply(&self, frame: &CohortFrame) -> Result<CohortFrame> {
        let mut out = frame.clone();
        for p in &self.params {
            let j = frame
                .feature_index(&p.feature)
                .ok_or_else(|| Error::Schema(format!("scaled feature {:?} missing from frame", p.feature)))?;
            let Column::Numeric(v) = frame.column(j) else {
                return Err(Error::Schema(format!("{:?} is not numeric", p.feature)));
            };
            let scaled = v.iter().map(|&x| p.transform(x)).collect();
            out = out.with_column(j, Column::Numeric(scaled), frame.missing(j).to_vec())?;
        }
        Ok(out)
    }

    pub fn get(&self, feature: &str) -> Option<&ScaleParams> {
        self.params.iter().find(|p| p.feature == feature)
    }
}

impl ScaleParams {
    pub fn transform(&self, x: f64) -> f64 {
        if self.degenerate {
            0.0
        } else {
            (x - self.mu) / self.sigma
        }
    }

    pub fn inverse(&self, z: f64) -> f64 {
        if self.degenerate {
            self.mu
        } else {
            self.mu + z * self.sigma
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroppedFeature {
    pub name: String,
    pub reason: String,
}

/// Numeric design matrix ready for model fitting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub columns: Vec<String>,
    /// Source feature of each column (differs from the column name for
    /// categorical indicators).
    pub sources: Vec<String>,
    /// True for 0/1 columns, which SMOTE re-thresholds after interpolation.
    pub binary: Vec<bool>,
    pub x: Array2<f64>,
    pub y: Vec<u8>,
    pub row_ids: Vec<String>,
}

impl Design {
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn rows(&self, idx: &[usize]) -> Design {
        Design {
            columns: self.columns.clone(),
            sources: self.sources.clone(),
            binary: self.binary.clone(),
            x: self.x.select(ndarray::Axis(0), idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            row_ids: idx.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }

    pub fn select_columns(&self, names: &[String]) -> Result<Design> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.columns.iter().position(|c| c == n).ok_or_else(|| Error::UnknownFeature(n.clone())))
            .collect::<Result<_>>()?;
        Ok(Design {
            columns: idx.iter().map(|&j| self.columns[j].clone()).collect(),
            sources: idx.iter().map(|&j| self.sources[j].clone()).collect(),
            binary: idx.iter().map(|&j| self.binary[j]).collect(),
            x: self.x.select(ndarray::Axis(1), &idx),
            y: self.y.clone(),
            row_ids: self.row_ids.clone(),
        })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Frozen preprocessing state fitted on a training frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedTransform {
    pub imputer: Imputer,
    pub encoder: Encoder,
    pub scaler: Scaler,
    pub dropped_features: Vec<DroppedFeature>,
}

impl FittedTransform {
    /// Fits imputation, encoding and scaling on `train`. Features with a
    /// training missing fraction above `missing_threshold` are dropped first.
    pub fn fit(train: &CohortFrame, missing_threshold: f64) -> Result<FittedTransform> {
        let (kept, dropped) = drop_high_missingness(train, missing_threshold)?;
        let imputer = Imputer::fit(&kept)?;
        let imputed = imputer.apply(&kept)?;
        let encoder = Encoder::fit(&imputed);
        let (encoded, _) = encoder.apply(&imputed)?;
        let scaler = Scaler::fit(&encoded)?;
        let mut dropped_features: Vec<DroppedFeature> = dropped
            .into_iter()
            .map(|name| DroppedFeature {
                name,
                reason: format!("missing fraction > {missing_threshold}"),
            })
            .collect();
        for p in scaler.params.iter().filter(|p| p.degenerate) {
            dropped_features.push(DroppedFeature {
                name: p.feature.clone(),
                reason: "zero training variance (degenerate)".into(),
            });
        }
        Ok(FittedTransform {
            imputer,
            encoder,
            scaler,
            dropped_features,
        })
    }

    fn kept_frame(&self, frame: &CohortFrame) -> Result<CohortFrame> {
        let names: Vec<String> = self.imputer.values.iter().map(|(n, _)| n.clone()).collect();
        frame.select_features(&names)
    }

    pub fn apply(&self, frame: &CohortFrame) -> Result<(CohortFrame, Vec<String>)> {
        let kept = self.kept_frame(frame)?;
        let imputed = self.imputer.apply(&kept)?;
        let (encoded, warnings) = self.encoder.apply(&imputed)?;
        Ok((self.scaler.apply(&encoded)?, warnings))
    }

    /// Applies the transform and returns the numeric design matrix. Columns
    /// flagged degenerate are still present (all zeros).
    pub fn design(&self, frame: &CohortFrame) -> Result<Design> {
        let (t, _) = self.apply(frame)?;
        frame_to_design(&t, &self.encoder)
    }
}

pub fn frame_to_design(frame: &CohortFrame, encoder: &Encoder) -> Result<Design> {
    let n = frame.n_rows();
    let d = frame.n_features();
    let mut x = Array2::zeros((n, d));
    let mut sources = Vec::with_capacity(d);
    let mut binary = Vec::with_capacity(d);
    for (j, spec) in frame.schema().iter().enumerate() {
        let Column::Numeric(v) = frame.column(j) else {
            return Err(Error::Schema(format!("{:?} is not encoded", spec.name)));
        };
        if frame.missing(j).iter().any(|&m| m) {
            return Err(Error::InvalidArgument(format!("{:?} still has missing cells", spec.name)));
        }
        for (i, &val) in v.iter().enumerate() {
            x[[i, j]] = val;
        }
        let source = encoder
            .encodings
            .iter()
            .find(|e| e.indicators.iter().any(|l| indicator_name(&e.feature, l) == spec.name))
            .map(|e| e.feature.clone())
            .unwrap_or_else(|| spec.name.clone());
        sources.push(source);
        binary.push(spec.kind == FeatureKind::Binary);
    }
    Ok(Design {
        columns: frame.feature_names(),
        sources,
        binary,
        x,
        y: frame.outcome().to_vec(),
        row_ids: frame.row_ids().to_vec(),
    })
}
