//! Synthetic cohort generator with class-conditional marginals.
//!
//! Features are drawn independently given the outcome. Each
//! `(feature, class)` pair reads from its own random stream keyed by the
//! feature name, so adding or removing a feature leaves every other column
//! unchanged for a fixed seed. Values are drawn for every cell before the
//! missing mask is applied, so the mask rate only affects the mask.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cohort::{CohortFrame, Column, DomainTag, FeatureKind, FeatureSpec};
use crate::error::{Error, Result};
use crate::rng::{rng_for, tag};

/// Estimated 28-day mortality prevalence.
///
/// Obtained by inverting PPV = sens·p / (sens·p + (1 - spec)(1 - p)) at the
/// published logistic-regression operating point (sens 0.710, spec 0.752,
/// PPV 0.362). It is an estimate, not a reported cohort statistic.
pub const DEFAULT_PREVALENCE: f64 = 0.165;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Marginal {
    Gaussian {
        mean_pos: f64,
        sd_pos: f64,
        mean_neg: f64,
        sd_neg: f64,
        #[serde(default)]
        clip_lo: Option<f64>,
        #[serde(default)]
        clip_hi: Option<f64>,
    },
    Bernoulli {
        prevalence_pos: f64,
        prevalence_neg: f64,
    },
    /// Two-level categorical: `level` with the given prevalence, else `other`.
    TwoLevel {
        level: String,
        other: String,
        prevalence_pos: f64,
        prevalence_neg: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureMarginal {
    pub feature: FeatureSpec,
    pub marginal: Marginal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassConditionalSpec {
    pub features: Vec<FeatureMarginal>,
}

impl ClassConditionalSpec {
    pub fn schema(&self) -> Vec<FeatureSpec> {
        self.features.iter().map(|f| f.feature.clone()).collect()
    }

    pub fn check(&self) -> Result<()> {
        crate::cohort::check_schema(&self.schema())?;
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        for f in &self.features {
            let name = &f.feature.name;
            let ok = match (&f.marginal, f.feature.kind) {
                (
                    Marginal::Gaussian {
                        sd_pos,
                        sd_neg,
                        mean_pos,
                        mean_neg,
                        clip_lo,
                        clip_hi,
                    },
                    FeatureKind::Numeric,
                ) => {
                    let bounds_ok = match (clip_lo, clip_hi) {
                        (Some(lo), Some(hi)) => lo < hi,
                        _ => true,
                    };
                    *sd_pos >= 0.0 && *sd_neg >= 0.0 && mean_pos.is_finite() && mean_neg.is_finite() && bounds_ok
                }
                (
                    Marginal::Bernoulli {
                        prevalence_pos,
                        prevalence_neg,
                    },
                    FeatureKind::Binary,
                ) => prob(*prevalence_pos) && prob(*prevalence_neg),
                (
                    Marginal::TwoLevel {
                        prevalence_pos,
                        prevalence_neg,
                        level,
                        other,
                    },
                    FeatureKind::Categorical,
                ) => prob(*prevalence_pos) && prob(*prevalence_neg) && level != other,
                _ => false,
            };
            if !ok {
                return Err(Error::Config(format!("invalid marginal for feature {name:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_rows: usize,
    pub prevalence: f64,
    pub seed: u64,
    #[serde(default)]
    pub missingness_rate: f64,
}

impl GeneratorConfig {
    pub fn new(n_rows: usize, seed: u64) -> Self {
        GeneratorConfig {
            n_rows,
            prevalence: DEFAULT_PREVALENCE,
            seed,
            missingness_rate: 0.0,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.n_rows < 2 {
            return Err(Error::Config("n_rows must be at least 2".into()));
        }
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return Err(Error::Config("prevalence must lie in (0, 1)".into()));
        }
        let n = self.n_rows as f64;
        if n * self.prevalence < 1.0 || n * (1.0 - self.prevalence) < 1.0 {
            return Err(Error::Config("expected fewer than one row in a class".into()));
        }
        if !(0.0..1.0).contains(&self.missingness_rate) {
            return Err(Error::Config("missingness_rate must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

const OUTCOME_STREAM: u64 = 0x6f75_7463_6f6d_65;
const MASK_STREAM: u64 = 0x6d61_736b;

pub fn generate(spec: &ClassConditionalSpec, cfg: &GeneratorConfig) -> Result<CohortFrame> {
    generate_for_schema(spec, &spec.schema(), cfg)
}

/// Generates columns in `schema` order; every schema feature must have a
/// marginal in `spec`.
pub fn generate_for_schema(spec: &ClassConditionalSpec, schema: &[FeatureSpec], cfg: &GeneratorConfig) -> Result<CohortFrame> {
    spec.check()?;
    cfg.check()?;
    let n = cfg.n_rows;

    let mut outcome_rng = rng_for(cfg.seed, OUTCOME_STREAM, 0);
    let outcome: Vec<u8> = (0..n).map(|_| u8::from(outcome_rng.random::<f64>() < cfg.prevalence)).collect();

    let mut columns = Vec::with_capacity(schema.len());
    let mut missing = Vec::with_capacity(schema.len());
    for feat in schema {
        let fm = spec
            .features
            .iter()
            .find(|f| f.feature.name == feat.name)
            .ok_or_else(|| Error::Config(format!("no marginal for schema feature {:?}", feat.name)))?;
        if fm.feature.kind != feat.kind {
            return Err(Error::Config(format!("kind mismatch for feature {:?}", feat.name)));
        }
        columns.push(draw_column(&fm.marginal, &feat.name, &outcome, cfg.seed)?);

        let mut mask_rng = rng_for(cfg.seed, MASK_STREAM ^ tag(&feat.name), 0);
        missing.push((0..n).map(|_| mask_rng.random::<f64>() < cfg.missingness_rate).collect());
    }

    let row_ids = (1..=n).map(|i| format!("P{i:06}")).collect();
    CohortFrame::new(schema.to_vec(), columns, missing, outcome, row_ids)
}

fn draw_column(marginal: &Marginal, name: &str, outcome: &[u8], seed: u64) -> Result<Column> {
    let stream = tag(name);
    // One stream per class, indexed by the outcome value.
    let mut rngs = [rng_for(seed, stream, 0), rng_for(seed, stream, 1)];
    Ok(match marginal {
        Marginal::Gaussian {
            mean_pos,
            sd_pos,
            mean_neg,
            sd_neg,
            clip_lo,
            clip_hi,
        } => {
            let pos = Normal::new(*mean_pos, *sd_pos).map_err(|e| Error::Config(format!("{name}: {e}")))?;
            let neg = Normal::new(*mean_neg, *sd_neg).map_err(|e| Error::Config(format!("{name}: {e}")))?;
            let lo = clip_lo.unwrap_or(f64::NEG_INFINITY);
            let hi = clip_hi.unwrap_or(f64::INFINITY);
            Column::Numeric(
                outcome
                    .iter()
                    .map(|&y| {
                        let d = if y == 1 { &pos } else { &neg };
                        d.sample(&mut rngs[usize::from(y == 1)]).clamp(lo, hi)
                    })
                    .collect(),
            )
        }
        Marginal::Bernoulli {
            prevalence_pos,
            prevalence_neg,
        } => Column::Numeric(
            outcome
                .iter()
                .map(|&y| {
                    let p = if y == 1 { *prevalence_pos } else { *prevalence_neg };
                    if rngs[usize::from(y == 1)].random::<f64>() < p {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
        ),
        Marginal::TwoLevel {
            level,
            other,
            prevalence_pos,
            prevalence_neg,
        } => Column::Categorical(
            outcome
                .iter()
                .map(|&y| {
                    let p = if y == 1 { *prevalence_pos } else { *prevalence_neg };
                    if rngs[usize::from(y == 1)].random::<f64>() < p {
                        level.clone()
                    } else {
                        other.clone()
                    }
                })
                .collect(),
        ),
    })
}

/// The 19-feature cohort: class-conditional means and SDs per feature, with
/// the outcome-1 (died within 28 days) group carrying the higher APS III.
pub fn builtin_paper_spec() -> ClassConditionalSpec {
    use DomainTag::*;
    let g = |name: &str, domain, unit: &str, neg: (f64, f64), pos: (f64, f64), lo: Option<f64>, hi: Option<f64>| FeatureMarginal {
        feature: FeatureSpec::new(name, FeatureKind::Numeric, domain, unit),
        marginal: Marginal::Gaussian {
            mean_pos: pos.0,
            sd_pos: pos.1,
            mean_neg: neg.0,
            sd_neg: neg.1,
            clip_lo: lo,
            clip_hi: hi,
        },
    };
    let b = |name: &str, domain, neg: f64, pos: f64| FeatureMarginal {
        feature: FeatureSpec::new(name, FeatureKind::Binary, domain, "Presence"),
        marginal: Marginal::Bernoulli {
            prevalence_pos: pos,
            prevalence_neg: neg,
        },
    };
    let features = vec![
        g("Anion gap", Chartevents, "mEq/L", (14.10, 3.56), (17.40, 5.41), Some(0.0), None),
        g("BUN", Chartevents, "mg/dL", (32.82, 23.65), (48.47, 28.27), Some(0.0), None),
        g("Richmond-RAS Scale", Chartevents, "Score", (-0.94, 1.16), (-2.03, 1.78), Some(-5.0), Some(4.0)),
        g("Braden Friction/Shear", Chartevents, "Score", (2.22, 0.40), (1.91, 0.41), Some(1.0), Some(3.0)),
        g("Braden Mobility", Chartevents, "Score", (2.52, 0.53), (2.10, 0.56), Some(1.0), Some(4.0)),
        g("Peak Insp. Pressure", Chartevents, "cmH2O", (20.02, 3.65), (22.49, 5.39), Some(0.0), None),
        g("pO2", Labevents, "mmHg", (134.07, 69.71), (102.25, 51.94), Some(0.0), None),
        g("Bilirubin, Total", Labevents, "mg/dL", (0.92, 1.16), (1.69, 2.46), Some(0.0), None),
        g("Albumin", Labevents, "g/dL", (3.32, 0.47), (3.02, 0.54), Some(0.0), None),
        g("INR(PT)", Labevents, "Ratio", (1.55, 0.70), (1.92, 0.87), Some(0.0), None),
        g("Urea Nitrogen", Labevents, "mg/dL", (33.19, 23.65), (47.96, 27.59), Some(0.0), None),
        g("Creatinine", Labevents, "mg/dL", (1.92, 1.76), (2.63, 1.80), Some(0.0), None),
        g("apsiii", Labevents, "Score", (48.30, 17.97), (68.58, 23.28), Some(0.0), Some(299.0)),
        b("Extubation", Procedureevents, 0.22, 0.07),
        b("Severe sepsis with septic shock", Comorbidities, 0.16, 0.50),
        b("Acute respiratory failure with hypoxia", Comorbidities, 0.29, 0.53),
        b("Cardiogenic shock", Comorbidities, 0.14, 0.31),
        g("age", AdmissionDemographics, "Years", (69.42, 8.94), (71.18, 8.62), Some(18.0), None),
        FeatureMarginal {
            feature: FeatureSpec::new("insurance", FeatureKind::Categorical, AdmissionDemographics, "If Medicaid"),
            marginal: Marginal::TwoLevel {
                level: "Medicaid".into(),
                other: "Other".into(),
                prevalence_pos: 0.09,
                prevalence_neg: 0.12,
            },
        },
    ];
    ClassConditionalSpec { features }
}
