//! Declarative pipeline configuration (JSON, versioned, fail-closed on
//! unknown keys).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cohort::{check_schema, DomainTag, FeatureSpec};
use crate::error::{Error, Result};
use crate::evaluate::{self, EvalSettings, Grid};
use crate::interpret::{AleScale, DEFAULT_ABLATION_REPEATS, DEFAULT_ALE_BINS};
use crate::models::forest::ForestParams;
use crate::models::{Family, ModelSpec};
use crate::preprocess::DEFAULT_WINDOW_HOURS;
use crate::resample::SmoteConfig;
use crate::select::{DEFAULT_K1, DEFAULT_K2};
use crate::synth::{self, ClassConditionalSpec, GeneratorConfig};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_OUTCOME: &str = "mortality_28d";
pub const DEFAULT_MISSING_THRESHOLD: f64 = 0.20;
pub const DEFAULT_ALE_TOP: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Csv {
        path: PathBuf,
        schema: Vec<FeatureSpec>,
        #[serde(default = "default_id_column")]
        id_column: Option<String>,
    },
    Synth {
        n_rows: usize,
        #[serde(default = "default_prevalence")]
        prevalence: f64,
        #[serde(default)]
        missingness_rate: f64,
        /// Class-conditional marginals; the builtin cohort spec when absent.
        #[serde(default)]
        spec: Option<ClassConditionalSpec>,
    },
}

fn default_id_column() -> Option<String> {
    Some("row_id".into())
}

fn default_prevalence() -> f64 {
    synth::DEFAULT_PREVALENCE
}

fn default_outcome() -> String {
    DEFAULT_OUTCOME.into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalConfig {
    /// Long-format `row_id,feature,time_h,value` measurements.
    pub path: PathBuf,
    #[serde(default = "default_window")]
    pub window_hours: f64,
    #[serde(default = "default_temporal_domain")]
    pub domain: DomainTag,
}

fn default_window() -> f64 {
    DEFAULT_WINDOW_HOURS
}

fn default_temporal_domain() -> DomainTag {
    DomainTag::Chartevents
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub missing_threshold: f64,
    pub temporal: Option<TemporalConfig>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            missing_threshold: DEFAULT_MISSING_THRESHOLD,
            temporal: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub k1: usize,
    pub k2: usize,
    pub rf_n_estimators: usize,
    /// 0 means unlimited.
    pub rf_max_depth: usize,
    pub rf_min_samples_leaf: usize,
    pub rf_max_features: String,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            k1: DEFAULT_K1,
            k2: DEFAULT_K2,
            rf_n_estimators: 200,
            rf_max_depth: 0,
            rf_min_samples_leaf: 1,
            rf_max_features: "sqrt".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub folds: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.3,
            folds: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoteSettings {
    pub enabled: bool,
    pub k_neighbors: usize,
    pub target_ratio: f64,
    /// Also oversample the full training set before each final fit.
    pub apply_to_final_fit: bool,
}

impl Default for SmoteSettings {
    fn default() -> Self {
        SmoteSettings {
            enabled: true,
            k_neighbors: 5,
            target_ratio: 1.0,
            apply_to_final_fit: true,
        }
    }
}

impl SmoteSettings {
    pub fn to_config(&self, seed: u64) -> Option<SmoteConfig> {
        self.enabled.then_some(SmoteConfig {
            k_neighbors: self.k_neighbors,
            target_ratio: self.target_ratio,
            seed,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelsConfig {
    pub families: Vec<Family>,
    /// Per-family grid overrides; families absent here use the defaults.
    pub grids: BTreeMap<Family, Grid>,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        ModelsConfig {
            families: Family::SEVEN.to_vec(),
            grids: BTreeMap::new(),
        }
    }
}

impl ModelsConfig {
    pub fn grid(&self, family: Family) -> Grid {
        self.grids.get(&family).cloned().unwrap_or_else(|| evaluate::default_grid(family))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AleReference {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterpretConfig {
    pub enabled: bool,
    /// Model family that ablation and ALE explain.
    pub family: Family,
    pub ablation_repeats: usize,
    pub ale_bins: usize,
    /// Design columns to plot; when empty, the `ale_top` columns with the
    /// largest ablation drop.
    pub ale_features: Vec<String>,
    pub ale_top: usize,
    pub ale_scale: AleScale,
    pub ale_reference: AleReference,
}

impl Default for InterpretConfig {
    fn default() -> Self {
        InterpretConfig {
            enabled: true,
            family: Family::Logistic,
            ablation_repeats: DEFAULT_ABLATION_REPEATS,
            ale_bins: DEFAULT_ALE_BINS,
            ale_features: Vec::new(),
            ale_top: DEFAULT_ALE_TOP,
            ale_scale: AleScale::Probability,
            ale_reference: AleReference::Test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    /// Master seed; every random stream in a run derives from it.
    pub seed: u64,
    pub data: DataSource,
    #[serde(default = "default_outcome")]
    pub outcome_column: String,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub smote: SmoteSettings,
    #[serde(default)]
    pub models: ModelsConfig,
    #[serde(default)]
    pub evaluation: EvalSettings,
    #[serde(default)]
    pub interpret: InterpretConfig,
    pub output_dir: PathBuf,
}

impl PipelineConfig {
    /// Synthetic demo: builtin cohort spec, 1,535 rows, default settings.
    pub fn demo(output_dir: impl Into<PathBuf>, seed: u64) -> Self {
        PipelineConfig {
            schema_version: SCHEMA_VERSION,
            seed,
            data: DataSource::Synth {
                n_rows: 1535,
                prevalence: synth::DEFAULT_PREVALENCE,
                missingness_rate: 0.0,
                spec: None,
            },
            outcome_column: DEFAULT_OUTCOME.into(),
            preprocess: PreprocessConfig::default(),
            selection: SelectionConfig::default(),
            split: SplitConfig::default(),
            smote: SmoteSettings::default(),
            models: ModelsConfig::default(),
            evaluation: EvalSettings::default(),
            interpret: InterpretConfig::default(),
            output_dir: output_dir.into(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the canonical (compact) JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn synth_spec(&self) -> Option<ClassConditionalSpec> {
        match &self.data {
            DataSource::Synth { spec, .. } => Some(spec.clone().unwrap_or_else(synth::builtin_paper_spec)),
            DataSource::Csv { .. } => None,
        }
    }

    pub fn generator_config(&self) -> Option<GeneratorConfig> {
        match &self.data {
            DataSource::Synth {
                n_rows,
                prevalence,
                missingness_rate,
                ..
            } => Some(GeneratorConfig {
                n_rows: *n_rows,
                prevalence: *prevalence,
                seed: self.seed,
                missingness_rate: *missingness_rate,
            }),
            DataSource::Csv { .. } => None,
        }
    }

    /// Raw feature schema declared by the data source.
    pub fn schema(&self) -> Vec<FeatureSpec> {
        match &self.data {
            DataSource::Csv { schema, .. } => schema.clone(),
            DataSource::Synth { spec, .. } => spec.clone().unwrap_or_else(synth::builtin_paper_spec).schema(),
        }
    }

    /// Checks everything that can be checked without touching the data
    /// beyond a CSV header.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        let schema = self.schema();
        check_schema(&schema)?;
        if self.outcome_column.is_empty() {
            return bad("outcome_column is empty".into());
        }
        if schema.iter().any(|f| f.name == self.outcome_column) {
            return bad(format!("outcome column {:?} is also declared as a feature", self.outcome_column));
        }
        match &self.data {
            DataSource::Csv { path, id_column, .. } => {
                let mut rdr = csv::Reader::from_path(path)
                    .map_err(|e| Error::Config(format!("cannot open data file {}: {e}", path.display())))?;
                let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
                if !header.contains(&self.outcome_column) {
                    return bad(format!("outcome column {:?} not found in {}", self.outcome_column, path.display()));
                }
                for f in &schema {
                    if !header.contains(&f.name) {
                        return bad(format!("schema feature {:?} not found in {}", f.name, path.display()));
                    }
                }
                if let Some(id) = id_column {
                    if schema.iter().any(|f| &f.name == id) || id == &self.outcome_column {
                        return bad(format!("id column {id:?} collides with a feature or the outcome"));
                    }
                }
            }
            DataSource::Synth { .. } => {
                self.synth_spec().expect("synth source").check()?;
                self.generator_config().expect("synth source").check()?;
            }
        }
        if !(0.0..=1.0).contains(&self.preprocess.missing_threshold) {
            return bad("preprocess.missing_threshold must lie in [0, 1]".into());
        }
        if let Some(t) = &self.preprocess.temporal {
            if !(t.window_hours > 0.0 && t.window_hours.is_finite()) {
                return bad("temporal.window_hours must be positive".into());
            }
        }
        let sel = &self.selection;
        if sel.k1 == 0 || sel.k2 == 0 || sel.k2 > sel.k1 {
            return bad(format!("selection needs 0 < k2 <= k1, got k1={} k2={}", sel.k1, sel.k2));
        }
        if sel.rf_n_estimators == 0 || sel.rf_min_samples_leaf == 0 {
            return bad("selection forest needs positive n_estimators and min_samples_leaf".into());
        }
        self.selection_forest()?;
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return bad("split.test_fraction must lie in (0, 1)".into());
        }
        if self.split.folds < 2 {
            return bad("split.folds must be at least 2".into());
        }
        if let Some(s) = self.smote.to_config(0) {
            s.check()?;
        }
        if self.models.families.is_empty() {
            return bad("models.families is empty".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for f in &self.models.families {
            if !seen.insert(*f) {
                return bad(format!("family {f} listed twice"));
            }
        }
        for (family, grid) in &self.models.grids {
            if grid.is_empty() || grid.values().any(Vec::is_empty) {
                return bad(format!("grid for {family} is empty"));
            }
            for point in evaluate::expand_grid(grid) {
                ModelSpec {
                    family: *family,
                    hyperparameters: point,
                    seed: 0,
                }
                .resolved()?;
            }
        }
        let ev = &self.evaluation;
        if !(0.0..=1.0).contains(&ev.threshold) || ev.bootstrap_replicates == 0 || !(ev.alpha > 0.0 && ev.alpha < 1.0) {
            return bad("evaluation needs threshold in [0, 1], replicates > 0 and alpha in (0, 1)".into());
        }
        let it = &self.interpret;
        if it.enabled {
            if !self.models.families.contains(&it.family) {
                return bad(format!("interpret.family {} is not among models.families", it.family));
            }
            if it.ablation_repeats == 0 || it.ale_bins == 0 {
                return bad("interpret needs ablation_repeats > 0 and ale_bins > 0".into());
            }
            if self.preprocess.temporal.is_none() {
                for f in &it.ale_features {
                    let known = schema
                        .iter()
                        .any(|s| &s.name == f || f.strip_prefix(s.name.as_str()).is_some_and(|r| r.starts_with('=')));
                    if !known {
                        return Err(Error::UnknownFeature(f.clone()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Forest used by the importance stage of feature selection.
    pub fn selection_forest(&self) -> Result<ForestParams> {
        let s = &self.selection;
        let h = ModelSpec::new(Family::RandomForest, 0)
            .with("n_estimators", s.rf_n_estimators as f64)
            .with("max_depth", s.rf_max_depth as f64)
            .with("min_samples_leaf", s.rf_min_samples_leaf as f64)
            .with("max_features", s.rf_max_features.as_str())
            .resolved()?;
        Ok(ForestParams::from_hyper(&h))
    }
}
