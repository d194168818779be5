//! End-to-end orchestration. Each stage reads the JSON/CSV artifacts of
//! earlier stages from the output directory and writes its own, so stages
//! can run standalone or in sequence via [`run`].

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cohort::{self, CohortFrame, FeatureSpec, LoadOptions, ValidationReport};
use crate::config::{AleReference, DataSource, PipelineConfig};
use crate::error::{Error, Result};
use crate::evaluate::{self, CvResult, MetricReport};
use crate::interpret::{self, AblationResult, AleCurve, CohortTable};
use crate::metrics;
use crate::models::{self, Family, ModelArtifact};
use crate::preprocess::{self, Design, FittedTransform};
use crate::report;
use crate::resample::{self, SplitPlan};
use crate::rng::{derive_seed, rng_for, tag};
use crate::select::{self, DroppedByStage, SelectionReport};
use crate::synth;

pub const MANIFEST_VERSION: u32 = 1;

/// Subcommand names, in pipeline order.
pub const STAGES: [&str; 8] = ["ingest", "preprocess", "select", "train", "evaluate", "ablate", "ale", "report"];

pub mod files {
    pub const COHORT: &str = "cohort.csv";
    pub const SCHEMA: &str = "schema.json";
    pub const VALIDATION: &str = "validation.json";
    pub const SPLIT: &str = "split_plan.json";
    pub const TRANSFORM: &str = "transform.json";
    pub const DESIGN: &str = "design.json";
    pub const COHORT_TABLE: &str = "cohort_table.json";
    pub const COHORT_TABLE_TXT: &str = "cohort_table.txt";
    pub const SELECTION: &str = "selection_report.json";
    pub const SELECTION_TXT: &str = "selection_report.txt";
    pub const CV: &str = "cv_results.json";
    pub const CV_TXT: &str = "cv_results.txt";
    pub const METRICS_TRAIN: &str = "metrics_train.json";
    pub const METRICS_TEST: &str = "metrics_test.json";
    pub const ABLATION: &str = "ablation.json";
    pub const ALE: &str = "ale.json";
    pub const REPORT: &str = "report.txt";
    pub const MANIFEST: &str = "manifest.json";
}

/// Output directory with a record of every file written through it.
pub struct Workspace {
    root: PathBuf,
    written: BTreeSet<String>,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Workspace {
            root,
            written: BTreeSet::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn written(&self) -> &BTreeSet<String> {
        &self.written
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> Result<()> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&p, text)?;
        self.written.insert(rel.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(rel, &text)
    }

    /// Reads an artifact, reporting the subcommand that produces it when
    /// the file is absent.
    pub fn read_json<T: DeserializeOwned>(&self, rel: &str, producer: &str) -> Result<T> {
        let text = self.read_text(rel, producer)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn read_text(&self, rel: &str, producer: &str) -> Result<String> {
        let p = self.path(rel);
        match std::fs::read_to_string(&p) {
            Ok(t) => Ok(t),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingArtifact {
                path: p.display().to_string(),
                stage: producer.to_string(),
            }),
            Err(e) => Err(e.into()),
        }
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.path(rel).exists()
    }
}

pub fn model_file(family: Family) -> String {
    format!("models/{}.json", family.key())
}

/// File-name-safe form of a design column name.
pub fn file_stem(feature: &str) -> String {
    feature
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

fn stage_seed(cfg: &PipelineConfig, stream: &str, index: u64) -> u64 {
    derive_seed(cfg.seed, tag(stream), index)
}

fn family_index(f: Family) -> u64 {
    tag(f.key())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IngestReport {
    pub validation: ValidationReport,
    pub warnings: Vec<String>,
}

/// Train and test designs over every column the transform keeps.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DesignSet {
    pub train: Design,
    pub test: Design,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CohortTables {
    /// Training versus test partition.
    pub partitions: CohortTable,
    /// Non-survivors versus survivors over the whole cohort.
    pub outcome: CohortTable,
}

/// Builds or loads the cohort named by the config, including temporal
/// aggregation when enabled.
pub fn load_cohort(cfg: &PipelineConfig) -> Result<(CohortFrame, Vec<String>)> {
    let (frame, warnings) = match &cfg.data {
        DataSource::Synth { .. } => {
            let spec = cfg.synth_spec().expect("synth source");
            let gen = cfg.generator_config().expect("synth source");
            (synth::generate(&spec, &gen)?, Vec::new())
        }
        DataSource::Csv { path, schema, id_column } => {
            let mut opts = LoadOptions::new(&cfg.outcome_column);
            opts.id_column = id_column.clone();
            let ing = cohort::load_csv(path, schema, &opts)?;
            (ing.frame, ing.warnings)
        }
    };
    let frame = match &cfg.preprocess.temporal {
        Some(t) => {
            let records = preprocess::load_temporal_csv(&t.path)?;
            preprocess::expand_temporal(&frame, &records, t.window_hours, t.domain)?
        }
        None => frame,
    };
    Ok((frame, warnings))
}

/// `ingest`: materializes the cohort as CSV with its schema and a
/// validation report.
pub fn stage_ingest(cfg: &PipelineConfig, ws: &mut Workspace) -> Result<CohortFrame> {
    let (frame, warnings) = load_cohort(cfg)?;
    let mut buf = Vec::new();
    cohort::write_csv(&frame, &mut buf, &cfg.outcome_column)?;
    ws.write_text(files::COHORT, &String::from_utf8(buf).expect("csv is utf-8"))?;
    ws.write_json(files::SCHEMA, &frame.schema())?;
    ws.write_json(
        files::VALIDATION,
        &IngestReport {
            validation: cohort::validate(&frame),
            warnings,
        },
    )?;
    Ok(frame)
}

fn read_cohort(cfg: &PipelineConfig, ws: &Workspace) -> Result<CohortFrame> {
    let schema: Vec<FeatureSpec> = ws.read_json(files::SCHEMA, "ingest")?;
    let text = ws.read_text(files::COHORT, "ingest")?;
    let opts = LoadOptions::new(&cfg.outcome_column);
    Ok(cohort::load_csv_reader(text.as_bytes(), &schema, &opts)?.frame)
}

fn comparison_tables(frame: &CohortFrame, plan: &SplitPlan) -> Result<CohortTables> {
    let train = frame.subset_rows(&plan.train_indices());
    let test = frame.subset_rows(&plan.test_indices());
    let rows = |y: u8| -> Vec<usize> { (0..frame.n_rows()).filter(|&i| frame.outcome()[i] == y).collect() };
    let died = frame.subset_rows(&rows(1));
    let survived = frame.subset_rows(&rows(0));
    Ok(CohortTables {
        partitions: interpret::cohort_comparison_table(&train, &test, "Train", "Test")?,
        outcome: interpret::cohort_comparison_table(&died, &survived, cohort::NON_SURVIVOR_LABEL, cohort::SURVIVOR_LABEL)?,
    })
}

/// `preprocess`: stratified split with training folds, train-only
/// transform, designs for both partitions and the cohort comparison
/// tables.
pub fn stage_preprocess(cfg: &PipelineConfig, ws: &mut Workspace) -> Result<DesignSet> {
    let frame = read_cohort(cfg, ws)?;
    let plan = resample::stratified_split(&frame, cfg.split.test_fraction, stage_seed(cfg, "split", 0))?.with_folds(
        frame.outcome(),
        cfg.split.folds,
        stage_seed(cfg, "folds", 0),
    )?;
    let train_frame = frame.subset_rows(&plan.train_indices());
    let test_frame = frame.subset_rows(&plan.test_indices());
    let transform = FittedTransform::fit(&train_frame, cfg.preprocess.missing_threshold)?;
    let designs = DesignSet {
        train: transform.design(&train_frame)?,
        test: transform.design(&test_frame)?,
    };
    let tables = comparison_tables(&frame, &plan)?;

    ws.write_json(files::SPLIT, &plan)?;
    ws.write_json(files::TRANSFORM, &transform)?;
    ws.write_json(files::DESIGN, &designs)?;
    ws.write_json(files::COHORT_TABLE, &tables)?;
    let text = format!(
        "Feature distributions: training vs test\n{}\nFeature distributions: {} vs {}\n{}",
        report::cohort_table_text(&tables.partitions),
        tables.outcome.group_a,
        tables.outcome.group_b,
        report::cohort_table_text(&tables.outcome)
    );
    ws.write_text(files::COHORT_TABLE_TXT, &text)?;
    Ok(designs)
}

/// Columns with a single training value carry no information for either
/// selection stage.
fn constant_columns(d: &Design) -> Vec<usize> {
    (0..d.x.ncols())
        .filter(|&j| {
            let c = d.x.column(j);
            c.iter().all(|&v| v == c[0])
        })
        .collect()
}

/// `select`: two-stage selection on the training design. Constant
/// columns are set aside first; `k1` and `k2` are capped at the number of
/// remaining columns.
pub fn stage_select(cfg: &PipelineConfig, ws: &mut Workspace) -> Result<SelectionReport> {
    let designs: DesignSet = ws.read_json(files::DESIGN, "preprocess")?;
    let transform: FittedTransform = ws.read_json(files::TRANSFORM, "preprocess")?;
    let train = &designs.train;
    let constant = constant_columns(train);
    let keep: Vec<String> = (0..train.columns.len())
        .filter(|j| !constant.contains(j))
        .map(|j| train.columns[j].clone())
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyInput("no informative training columns".into()));
    }
    let sub = train.select_columns(&keep)?;
    let k1 = cfg.selection.k1.min(keep.len());
    let k2 = cfg.selection.k2.min(k1);
    if k1 < cfg.selection.k1 || k2 < cfg.selection.k2 {
        log::warn!("selection sizes capped to k1={k1}, k2={k2} by {} available columns", keep.len());
    }
    let params = cfg.selection_forest()?;
    let mut rep = select::two_stage_select(&keep, sub.x.view(), &sub.y, k1, k2, &params, stage_seed(cfg, "select", 0))?;
    let mut pre: Vec<DroppedByStage> = transform
        .dropped_features
        .iter()
        .filter(|d| !train.columns.contains(&d.name) && !train.sources.contains(&d.name))
        .map(|d| DroppedByStage {
            feature: d.name.clone(),
            stage: "preprocess".into(),
            reason: d.reason.clone(),
        })
        .collect();
    pre.extend(constant.iter().map(|&j| DroppedByStage {
        feature: train.columns[j].clone(),
        stage: "preprocess".into(),
        reason: "constant on the training partition".into(),
    }));
    pre.append(&mut rep.dropped);
    rep.dropped = pre;
    ws.write_json(files::SELECTION, &rep)?;
    ws.write_text(files::SELECTION_TXT, &report::selection_table_text(&rep))?;
    Ok(rep)
}

/// Training and test designs restricted to the selected columns.
fn selected_designs(ws: &Workspace) -> Result<(DesignSet, SelectionReport)> {
    let designs: DesignSet = ws.read_json(files::DESIGN, "preprocess")?;
    let sel: SelectionReport = ws.read_json(files::SELECTION, "select")?;
    let set = DesignSet {
        train: designs.train.select_columns(&sel.final_features)?,
        test: designs.test.select_columns(&sel.final_features)?,
    };
    Ok((set, sel))
}

fn final_smote(cfg: &PipelineConfig, family: Family) -> Option<resample::SmoteConfig> {
    if cfg.smote.apply_to_final_fit {
        cfg.smote.to_config(stage_seed(cfg, "final-smote", family_index(family)))
    } else {
        None
    }
}

/// `train`: grid-search CV per family, then a final fit on the whole
/// training partition with the winning hyperparameters.
pub fn stage_train(cfg: &PipelineConfig, ws: &mut Workspace) -> Result<Vec<CvResult>> {
    let (designs, _) = selected_designs(ws)?;
    let plan: SplitPlan = ws.read_json(files::SPLIT, "preprocess")?;
    let folds = plan.train_folds()?;
    let mut results = Vec::new();
    for &family in &cfg.models.families {
        let smote = cfg.smote.to_config(stage_seed(cfg, "cv-smote", 0));
        let cv = evaluate::grid_search_cv(
            family,
            &cfg.models.grid(family),
            &designs.train,
            &folds,
            plan.fold_count,
            smote.as_ref(),
            cfg.evaluation.threshold,
            stage_seed(cfg, "cv", 0),
        )
        .map_err(|e| e.in_stage(&format!("train/{}", family.key())))?;
        let spec = models::ModelSpec {
            family,
            hyperparameters: cv.best.clone(),
            seed: stage_seed(cfg, "final-fit", family_index(family)),
        };
        let artifact = evaluate::fit_final(&spec, &designs.train, final_smote(cfg, family).as_ref())
            .map_err(|e| e.in_stage(&format!("train/{}", family.key())))?;
        ws.write_text(&model_file(family), &artifact.to_json()?)?;
        log::info!("{family}: CV AUROC {:.4}", cv.points[cv.best_index].mean_auroc);
        results.push(cv);
    }
    ws.write_json(files::CV, &results)?;
    ws.write_text(files::CV_TXT, &report::cv_table_text(&results))?;
    Ok(results)
}

fn read_model(ws: &Workspace, family: Family) -> Result<ModelArtifact> {
    ModelArtifact::from_json(&ws.read_text(&model_file(family), "train")?)
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub train: Vec<MetricReport>,
    pub test: Vec<MetricReport>,
}

/// `evaluate`: train and test metric tables with bootstrap intervals,
/// plus ROC curves.
pub fn stage_evaluate(cfg: &PipelineConfig, ws: &mut Workspace) -> Result<Evaluation> {
    let (designs, _) = selected_designs(ws)?;
    let mut out = Evaluation {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (part, design) in [("train", &designs.train), ("test", &designs.test)] {
        let mut reports = Vec::new();
        let mut curves = Vec::new();
        for &family in &cfg.models.families {
            let model = read_model(ws, family)?;
            let seed = derive_seed(stage_seed(cfg, "bootstrap", family_index(family)), tag(part), 0);
            let (rep, roc) = evaluate::evaluate_model(family.display_name(), &model, design, &cfg.evaluation, seed)?;
            curves.push((family.display_name().to_string(), rep.auroc, roc));
            reports.push(rep);
        }
        ws.write_json(&format!("metrics_{part}.json"), &reports)?;
        ws.write_text(&format!("metrics_{part}.txt"), &report::metrics_table(&reports))?;
        let long: Vec<(String, Vec<metrics::RocPoint>)> = curves.iter().map(|(n, _, p)| (n.clone(), p.clone())).collect();
        ws.write_text(&format!("roc_{part}.csv"), &report::roc_csv_multi(&long)?)?;
        let title = format!("ROC curves ({part} set)");
        ws.write_text(&format!("roc_{part}.svg"), &report::roc_svg(&title, &curves))?;
        if part == "train" {
            out.train = reports;
        } else {
            out.test = reports;
        }
    }
    Ok(out)
}

/// Row indices of a two-class bootstrap resample.
fn bootstrap_rows(labels: &[u8], seed: u64, index: u64) -> Result<Vec<usize>> {
    let n = labels.len();
    let mut rng = rng_for(seed, tag("ablation-bootstrap"), index);
    for _ in 0..metrics::BOOTSTRAP_MAX_RETRIES {
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let pos = rows.iter().filter(|&&i| labels[i] == 1).count();
        if pos > 0 && pos < n {
            return Ok(rows);
        }
    }
    Err(Error::RetryBudget(metrics::BOOTSTRAP_MAX_RETRIES))
}

/// Leave-one-feature-out ablation of the interpreted family over the
/// selected features, with the tuned hyperparameters held fixed.
pub fn ablation_for(cfg: &PipelineConfig, model: &ModelArtifact, designs: &DesignSet, features: &[String]) -> Result<AblationResult> {
    let baseline = metrics::auroc(&models::predict_proba(model, designs.test.x.view())?, &designs.test.y)?;
    let seed = stage_seed(cfg, "ablation", 0);
    let base_spec = model.spec();
    interpret::ablation(features, baseline, cfg.interpret.ablation_repeats, |removed, r| {
        let kept: Vec<String> = features.iter().filter(|f| Some(f.as_str()) != removed).cloned().collect();
        let train = designs.train.select_columns(&kept)?;
        let test = designs.test.select_columns(&kept)?;
        let spec = models::ModelSpec {
            seed: derive_seed(seed, tag("model"), r as u64),
            ..base_spec.clone()
        };
        let smote = if cfg.smote.apply_to_final_fit {
            cfg.smote.to_config(derive_seed(seed, tag("smote"), r as u64))
        } else {
            None
        };
        let fitted = evaluate::fit_final(&spec, &train, smote.as_ref())?;
        let scores = models::predict_proba(&fitted, test.x.view())?;
        let rows = bootstrap_rows(&test.y, seed, r as u64)?;
        let s: Vec<f64> = rows.iter().map(|&i| scores[i]).collect();
        let y: Vec<u8> = rows.iter().map(|&i| test.y[i]).collect();
        metrics::auroc(&s, &y)
    })
}

/// `ablate`: leave-one-feature-out retraining of the interpreted family.
pub fn stage_ablate(cfg: &PipelineConfig, ws: &mut Workspace) -> Result<AblationResult> {
    let family = cfg.interpret.family;
    let model = read_model(ws, family)?;
    let (designs, sel) = selected_designs(ws)?;
    let result = ablation_for(cfg, &model, &designs, &sel.final_features)?;
    ws.write_json(files::ABLATION, &result)?;
    ws.write_text("ablation.csv", &report::ablation_csv(&result)?)?;
    let title = format!("Impact of feature removal ({})", family.display_name());
    ws.write_text("ablation.svg", &report::ablation_svg(&title, &result))?;
    ws.write_text("ablation.txt", &report::ablation_table_text(&result))?;
    Ok(result)
}

/// ALE curve for one design column, with edges mapped back to original
/// units for numeric features.
pub fn ale_for(
    cfg: &PipelineConfig,
    model: &ModelArtifact,
    reference: &Design,
    transform: &FittedTransform,
    feature: &str,
) -> Result<AleCurve> {
    let j = reference
        .column_index(feature)
        .ok_or_else(|| Error::UnknownFeature(feature.to_string()))?;
    let it = &cfg.interpret;
    if reference.binary[j] {
        interpret::ale_binary(model, reference.x.view(), j, feature, it.ale_scale)
    } else {
        let mut c = interpret::ale_first_order(model, reference.x.view(), j, feature, it.ale_bins, it.ale_scale)?;
        if let Some(p) = transform.scaler.get(&reference.sources[j]) {
            c.edges_original = Some(c.edges.iter().map(|&z| p.inverse(z)).collect());
        }
        Ok(c)
    }
}

/// `ale`: curves for the configured features, or for the features whose
/// removal cost the most AUROC.
pub fn stage_ale(cfg: &PipelineConfig, ws: &mut Workspace) -> Result<Vec<AleCurve>> {
    let it = &cfg.interpret;
    let model = read_model(ws, it.family)?;
    let (designs, sel) = selected_designs(ws)?;
    let transform: FittedTransform = ws.read_json(files::TRANSFORM, "preprocess")?;
    let features: Vec<String> = if it.ale_features.is_empty() {
        let abl: AblationResult = ws.read_json(files::ABLATION, "ablate")?;
        abl.by_drop().into_iter().take(it.ale_top).map(|f| f.feature.clone()).collect()
    } else {
        for f in &it.ale_features {
            if !sel.final_features.contains(f) {
                return Err(Error::UnknownFeature(f.clone()));
            }
        }
        it.ale_features.clone()
    };
    let reference = match it.ale_reference {
        AleReference::Test => &designs.test,
        AleReference::Train => &designs.train,
    };
    let mut curves = Vec::new();
    for f in &features {
        let c = ale_for(cfg, &model, reference, &transform, f)?;
        let stem = file_stem(f);
        ws.write_text(&format!("ale_{stem}.csv"), &report::ale_csv(&c)?)?;
        ws.write_text(&format!("ale_{stem}.svg"), &report::ale_svg(&c))?;
        curves.push(c);
    }
    ws.write_json(files::ALE, &curves)?;
    Ok(curves)
}

/// `report`: gathers the text tables of every completed stage into one
/// document.
pub fn stage_report(ws: &mut Workspace) -> Result<String> {
    let train: Vec<MetricReport> = ws.read_json(files::METRICS_TRAIN, "evaluate")?;
    let test: Vec<MetricReport> = ws.read_json(files::METRICS_TEST, "evaluate")?;
    let tables: CohortTables = ws.read_json(files::COHORT_TABLE, "preprocess")?;
    let mut out = String::new();
    let mut section = |title: &str, body: String| {
        out.push_str(title);
        out.push('\n');
        out.push_str(&body);
        out.push('\n');
    };
    section("Feature distributions: training vs test", report::cohort_table_text(&tables.partitions));
    section(
        &format!("Feature distributions: {} vs {}", tables.outcome.group_a, tables.outcome.group_b),
        report::cohort_table_text(&tables.outcome),
    );
    if ws.exists(files::SELECTION) {
        let sel: SelectionReport = ws.read_json(files::SELECTION, "select")?;
        section("Feature selection", report::selection_table_text(&sel));
    }
    if ws.exists(files::CV) {
        let cv: Vec<CvResult> = ws.read_json(files::CV, "train")?;
        section("Cross-validated tuning", report::cv_table_text(&cv));
    }
    section("Model performance: training set", report::metrics_table(&train));
    section("Model performance: test set", report::metrics_table(&test));
    if ws.exists(files::ABLATION) {
        let abl: AblationResult = ws.read_json(files::ABLATION, "ablate")?;
        section("Feature ablation", report::ablation_table_text(&abl));
    }
    ws.write_text(files::REPORT, &out)?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactVersions {
    pub crate_version: String,
    pub config_schema: u32,
    pub model_format: u32,
    pub manifest: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub versions: ArtifactVersions,
    pub timings: Vec<StageTiming>,
    /// Every emitted file except the manifest, sorted by path.
    pub files: Vec<FileEntry>,
}

fn inventory(ws: &Workspace) -> Result<Vec<FileEntry>> {
    ws.written()
        .iter()
        .map(|rel| {
            let bytes = std::fs::read(ws.path(rel))?;
            Ok(FileEntry {
                path: rel.clone(),
                bytes: bytes.len() as u64,
                sha256: Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect(),
            })
        })
        .collect()
}

/// Runs every stage in order and writes `manifest.json`.
pub fn run(cfg: &PipelineConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let mut ws = Workspace::new(&cfg.output_dir)?;
    let mut timings = Vec::new();
    let mut timed = |name: &str, ws: &mut Workspace, f: &dyn Fn(&mut Workspace) -> Result<()>| -> Result<()> {
        let t0 = Instant::now();
        log::info!("stage {name}");
        f(ws).map_err(|e| e.in_stage(name))?;
        timings.push(StageTiming {
            stage: name.to_string(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        Ok(())
    };
    timed("ingest", &mut ws, &|ws| stage_ingest(cfg, ws).map(drop))?;
    timed("preprocess", &mut ws, &|ws| stage_preprocess(cfg, ws).map(drop))?;
    timed("select", &mut ws, &|ws| stage_select(cfg, ws).map(drop))?;
    timed("train", &mut ws, &|ws| stage_train(cfg, ws).map(drop))?;
    timed("evaluate", &mut ws, &|ws| stage_evaluate(cfg, ws).map(drop))?;
    if cfg.interpret.enabled {
        timed("ablate", &mut ws, &|ws| stage_ablate(cfg, ws).map(drop))?;
        timed("ale", &mut ws, &|ws| stage_ale(cfg, ws).map(drop))?;
    }
    timed("report", &mut ws, &|ws| stage_report(ws).map(drop))?;

    let manifest = RunManifest {
        config_hash: cfg.hash(),
        versions: ArtifactVersions {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            config_schema: crate::config::SCHEMA_VERSION,
            model_format: models::ARTIFACT_FORMAT_VERSION,
            manifest: MANIFEST_VERSION,
        },
        timings,
        files: inventory(&ws)?,
    };
    ws.write_json(files::MANIFEST, &manifest)?;
    Ok(manifest)
}
