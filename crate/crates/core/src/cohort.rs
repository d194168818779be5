//! Typed tabular cohort data: feature schema, CSV ingestion, validation and
//! grouped summaries.
//!
//! A [`CohortFrame`] holds one row per patient stay. Numeric and binary
//! features are stored as `f64` (binary as 0/1), categorical features as
//! strings. The missing mask is authoritative: value slots under a set mask
//! bit hold an unspecified placeholder.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Binary,
    Categorical,
}

/// Source category of a feature in the extract.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainTag {
    Chartevents,
    Labevents,
    Procedureevents,
    Comorbidities,
    AdmissionDemographics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub domain: DomainTag,
    #[serde(default)]
    pub unit: String,
}

impl FeatureSpec {
    pub fn new(name: &str, kind: FeatureKind, domain: DomainTag, unit: &str) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind,
            domain,
            unit: unit.to_string(),
        }
    }
}

pub fn check_schema(schema: &[FeatureSpec]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for f in schema {
        if f.name.is_empty() {
            return Err(Error::Schema("empty feature name".into()));
        }
        if !seen.insert(f.name.as_str()) {
            return Err(Error::Schema(format!("duplicate feature name {:?}", f.name)));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn subset(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&i| v[i].clone()).collect()),
        }
    }
}

/// Train/test membership of a row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Test,
}

/// Immutable rectangular table of patient records with a binary outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct CohortFrame {
    schema: Vec<FeatureSpec>,
    columns: Vec<Column>,
    missing: Vec<Vec<bool>>,
    outcome: Vec<u8>,
    row_ids: Vec<String>,
}

impl CohortFrame {
    pub fn new(
        schema: Vec<FeatureSpec>,
        columns: Vec<Column>,
        missing: Vec<Vec<bool>>,
        outcome: Vec<u8>,
        row_ids: Vec<String>,
    ) -> Result<Self> {
        check_schema(&schema)?;
        let n = outcome.len();
        if columns.len() != schema.len() || missing.len() != schema.len() {
            return Err(Error::Schema(format!(
                "{} schema entries but {} columns and {} masks",
                schema.len(),
                columns.len(),
                missing.len()
            )));
        }
        if row_ids.len() != n {
            return Err(Error::Schema(format!("{} row ids for {} rows", row_ids.len(), n)));
        }
        for (row, &y) in outcome.iter().enumerate() {
            if y > 1 {
                return Err(Error::Outcome {
                    row: row + 1,
                    message: format!("outcome {y} not in {{0,1}}"),
                });
            }
        }
        for ((spec, col), mask) in schema.iter().zip(&columns).zip(&missing) {
            if col.len() != n || mask.len() != n {
                return Err(Error::Schema(format!(
                    "column {:?} has {} values and {} mask bits for {} rows",
                    spec.name,
                    col.len(),
                    mask.len(),
                    n
                )));
            }
            match (spec.kind, col) {
                (FeatureKind::Categorical, Column::Categorical(_)) => {}
                (FeatureKind::Numeric, Column::Numeric(_)) => {}
                (FeatureKind::Binary, Column::Numeric(v)) => {
                    for (row, (&x, &m)) in v.iter().zip(mask).enumerate() {
                        if !m && x != 0.0 && x != 1.0 {
                            return Err(Error::Parse {
                                row: row + 1,
                                column: spec.name.clone(),
                                message: format!("binary value {x} not in {{0,1}}"),
                            });
                        }
                    }
                }
                _ => {
                    return Err(Error::Schema(format!(
                        "column {:?} storage does not match kind {:?}",
                        spec.name, spec.kind
                    )))
                }
            }
        }
        Ok(CohortFrame {
            schema,
            columns,
            missing,
            outcome,
            row_ids,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.outcome.len()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn schema(&self) -> &[FeatureSpec] {
        &self.schema
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &Column {
        &self.columns[j]
    }

    pub fn missing(&self, j: usize) -> &[bool] {
        &self.missing[j]
    }

    pub fn outcome(&self) -> &[u8] {
        &self.outcome
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|f| f.name == name)
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.schema.iter().map(|f| f.name.clone()).collect()
    }

    pub fn is_missing(&self, row: usize, j: usize) -> bool {
        self.missing[j][row]
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|m| m.iter().any(|&b| b))
    }

    /// Non-missing values of a numeric or binary column.
    pub fn observed_numeric(&self, j: usize) -> Vec<f64> {
        match &self.columns[j] {
            Column::Numeric(v) => v
                .iter()
                .zip(&self.missing[j])
                .filter(|(_, &m)| !m)
                .map(|(&x, _)| x)
                .collect(),
            Column::Categorical(_) => Vec::new(),
        }
    }

    pub fn observed_levels(&self, j: usize) -> Vec<&str> {
        match &self.columns[j] {
            Column::Categorical(v) => v
                .iter()
                .zip(&self.missing[j])
                .filter(|(_, &m)| !m)
                .map(|(x, _)| x.as_str())
                .collect(),
            Column::Numeric(_) => Vec::new(),
        }
    }

    pub fn subset_rows(&self, rows: &[usize]) -> CohortFrame {
        CohortFrame {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.subset(rows)).collect(),
            missing: self
                .missing
                .iter()
                .map(|m| rows.iter().map(|&i| m[i]).collect())
                .collect(),
            outcome: rows.iter().map(|&i| self.outcome[i]).collect(),
            row_ids: rows.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }

    /// Keep only the named features, in the given order.
    pub fn select_features(&self, names: &[String]) -> Result<CohortFrame> {
        let mut schema = Vec::with_capacity(names.len());
        let mut columns = Vec::with_capacity(names.len());
        let mut missing = Vec::with_capacity(names.len());
        for name in names {
            let j = self
                .feature_index(name)
                .ok_or_else(|| Error::UnknownFeature(name.clone()))?;
            schema.push(self.schema[j].clone());
            columns.push(self.columns[j].clone());
            missing.push(self.missing[j].clone());
        }
        CohortFrame::new(schema, columns, missing, self.outcome.clone(), self.row_ids.clone())
    }

    pub fn drop_features(&self, names: &[String]) -> CohortFrame {
        let keep: Vec<String> = self
            .schema
            .iter()
            .filter(|f| !names.contains(&f.name))
            .map(|f| f.name.clone())
            .collect();
        self.select_features(&keep).expect("kept names come from the schema")
    }

    pub fn with_outcome(&self, outcome: Vec<u8>) -> Result<CohortFrame> {
        CohortFrame::new(
            self.schema.clone(),
            self.columns.clone(),
            self.missing.clone(),
            outcome,
            self.row_ids.clone(),
        )
    }

    pub fn with_column(&self, j: usize, column: Column, missing: Vec<bool>) -> Result<CohortFrame> {
        let mut columns = self.columns.clone();
        let mut masks = self.missing.clone();
        columns[j] = column;
        masks[j] = missing;
        CohortFrame::new(self.schema.clone(), columns, masks, self.outcome.clone(), self.row_ids.clone())
    }

    pub fn with_added_column(&self, spec: FeatureSpec, column: Column, missing: Vec<bool>) -> Result<CohortFrame> {
        let mut schema = self.schema.clone();
        let mut columns = self.columns.clone();
        let mut masks = self.missing.clone();
        schema.push(spec);
        columns.push(column);
        masks.push(missing);
        CohortFrame::new(schema, columns, masks, self.outcome.clone(), self.row_ids.clone())
    }

    pub fn with_mask(&self, missing: Vec<Vec<bool>>) -> Result<CohortFrame> {
        CohortFrame::new(
            self.schema.clone(),
            self.columns.clone(),
            missing,
            self.outcome.clone(),
            self.row_ids.clone(),
        )
    }

    pub fn positives(&self) -> usize {
        self.outcome.iter().filter(|&&y| y == 1).count()
    }
}

#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub outcome_column: String,
    /// Column holding an opaque row identifier; generated when absent.
    pub id_column: Option<String>,
    pub missing_sentinels: Vec<String>,
}

impl LoadOptions {
    pub fn new(outcome_column: &str) -> Self {
        LoadOptions {
            outcome_column: outcome_column.to_string(),
            id_column: Some("row_id".to_string()),
            missing_sentinels: vec![String::new(), "NA".to_string()],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Ingested {
    pub frame: CohortFrame,
    pub warnings: Vec<String>,
}

pub fn load_csv(path: impl AsRef<Path>, schema: &[FeatureSpec], opts: &LoadOptions) -> Result<Ingested> {
    let file = std::fs::File::open(path.as_ref())?;
    load_csv_reader(file, schema, opts)
}

pub fn load_csv_reader<R: Read>(reader: R, schema: &[FeatureSpec], opts: &LoadOptions) -> Result<Ingested> {
    check_schema(schema)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let position = |name: &str| header.iter().position(|h| h == name);

    let mut feature_pos = Vec::with_capacity(schema.len());
    for f in schema {
        let p = position(&f.name).ok_or_else(|| Error::Schema(format!("column {:?} not in CSV header", f.name)))?;
        feature_pos.push(p);
    }
    let outcome_pos = position(&opts.outcome_column)
        .ok_or_else(|| Error::Schema(format!("outcome column {:?} not in CSV header", opts.outcome_column)))?;
    let id_pos = opts.id_column.as_deref().and_then(position);

    let mut warnings = Vec::new();
    for (i, h) in header.iter().enumerate() {
        if i != outcome_pos && Some(i) != id_pos && !feature_pos.contains(&i) {
            let msg = format!("ignoring extra column {h:?}");
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }

    let mut columns: Vec<Column> = schema
        .iter()
        .map(|f| match f.kind {
            FeatureKind::Categorical => Column::Categorical(Vec::new()),
            _ => Column::Numeric(Vec::new()),
        })
        .collect();
    let mut missing: Vec<Vec<bool>> = vec![Vec::new(); schema.len()];
    let mut outcome = Vec::new();
    let mut row_ids = Vec::new();

    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let cell = |pos: usize| record.get(pos).unwrap_or("").trim();
        let is_missing = |s: &str| opts.missing_sentinels.iter().any(|m| m == s);

        let y = cell(outcome_pos);
        if is_missing(y) {
            return Err(Error::Outcome {
                row,
                message: "outcome is missing".into(),
            });
        }
        let y = match y.parse::<f64>() {
            Ok(v) if v == 0.0 => 0u8,
            Ok(v) if v == 1.0 => 1u8,
            _ => {
                return Err(Error::Outcome {
                    row,
                    message: format!("outcome {y:?} not in {{0,1}}"),
                })
            }
        };
        outcome.push(y);
        row_ids.push(match id_pos {
            Some(p) => cell(p).to_string(),
            None => format!("r{row}"),
        });

        for (j, f) in schema.iter().enumerate() {
            let s = cell(feature_pos[j]);
            let miss = is_missing(s);
            missing[j].push(miss);
            match &mut columns[j] {
                Column::Categorical(v) => v.push(if miss { String::new() } else { s.to_string() }),
                Column::Numeric(v) => {
                    if miss {
                        v.push(f64::NAN);
                        continue;
                    }
                    let x: f64 = s.parse().map_err(|_| Error::Parse {
                        row,
                        column: f.name.clone(),
                        message: format!("cannot parse {s:?} as a number"),
                    })?;
                    if !x.is_finite() {
                        return Err(Error::Parse {
                            row,
                            column: f.name.clone(),
                            message: format!("non-finite value {s:?}"),
                        });
                    }
                    if f.kind == FeatureKind::Binary && x != 0.0 && x != 1.0 {
                        return Err(Error::Parse {
                            row,
                            column: f.name.clone(),
                            message: format!("binary value {s:?} not in {{0,1}}"),
                        });
                    }
                    v.push(x);
                }
            }
        }
    }

    let frame = CohortFrame::new(schema.to_vec(), columns, missing, outcome, row_ids)?;
    Ok(Ingested { frame, warnings })
}

/// Writes `row_id`, the features and the outcome. Missing cells are written
/// as empty strings; floats use the shortest round-trip representation.
pub fn write_csv<W: Write>(frame: &CohortFrame, writer: W, outcome_column: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["row_id".to_string()];
    header.extend(frame.feature_names());
    header.push(outcome_column.to_string());
    w.write_record(&header)?;
    for i in 0..frame.n_rows() {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(frame.row_ids[i].clone());
        for (j, col) in frame.columns.iter().enumerate() {
            if frame.missing[j][i] {
                rec.push(String::new());
                continue;
            }
            rec.push(match col {
                Column::Numeric(v) => format!("{}", v[i]),
                Column::Categorical(v) => v[i].clone(),
            });
        }
        rec.push(frame.outcome[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(frame: &CohortFrame, path: impl AsRef<Path>, outcome_column: &str) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_csv(frame, std::io::BufWriter::new(file), outcome_column)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureValidation {
    pub name: String,
    pub kind: FeatureKind,
    pub missing_fraction: f64,
    pub constant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub negative: usize,
    pub positive: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_rows: usize,
    pub features: Vec<FeatureValidation>,
    pub constant_features: Vec<String>,
    pub class_counts: ClassCounts,
}

pub fn validate(frame: &CohortFrame) -> ValidationReport {
    let n = frame.n_rows();
    let mut features = Vec::with_capacity(frame.n_features());
    let mut constant_features = Vec::new();
    for (j, spec) in frame.schema.iter().enumerate() {
        let n_missing = frame.missing[j].iter().filter(|&&m| m).count();
        let constant = match &frame.columns[j] {
            Column::Numeric(_) => {
                let obs = frame.observed_numeric(j);
                obs.windows(2).all(|w| w[0] == w[1])
            }
            Column::Categorical(_) => {
                let obs = frame.observed_levels(j);
                obs.windows(2).all(|w| w[0] == w[1])
            }
        };
        if constant {
            constant_features.push(spec.name.clone());
        }
        features.push(FeatureValidation {
            name: spec.name.clone(),
            kind: spec.kind,
            missing_fraction: if n == 0 { 0.0 } else { n_missing as f64 / n as f64 },
            constant,
        });
    }
    let positive = frame.positives();
    ValidationReport {
        n_rows: n,
        features,
        constant_features,
        class_counts: ClassCounts {
            negative: n - positive,
            positive,
        },
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Grouping<'a> {
    ByOutcome,
    ByPartition(&'a [Partition]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub name: String,
    pub kind: FeatureKind,
    pub unit: String,
    pub n_observed: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub prevalence: Option<f64>,
    /// Level frequencies for categorical features.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub levels: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group_label: String,
    pub n: usize,
    /// Set for single-row groups, whose SDs are reported as 0.
    pub degenerate: bool,
    pub features: Vec<FeatureSummary>,
}

pub const SURVIVOR_LABEL: &str = "survivor";
pub const NON_SURVIVOR_LABEL: &str = "non-survivor";

pub fn summarize_by_group(frame: &CohortFrame, grouping: Grouping<'_>) -> Result<Vec<GroupSummary>> {
    let groups: Vec<(String, Vec<usize>)> = match grouping {
        Grouping::ByOutcome => vec![
            (SURVIVOR_LABEL.to_string(), rows_where(frame.outcome(), |&y| y == 0)),
            (NON_SURVIVOR_LABEL.to_string(), rows_where(frame.outcome(), |&y| y == 1)),
        ],
        Grouping::ByPartition(parts) => {
            if parts.len() != frame.n_rows() {
                return Err(Error::InvalidArgument(format!(
                    "{} partition labels for {} rows",
                    parts.len(),
                    frame.n_rows()
                )));
            }
            vec![
                ("train".to_string(), rows_where(parts, |&p| p == Partition::Train)),
                ("test".to_string(), rows_where(parts, |&p| p == Partition::Test)),
            ]
        }
    };
    groups
        .into_iter()
        .map(|(label, rows)| {
            if rows.is_empty() {
                return Err(Error::EmptyGroup(label));
            }
            let sub = frame.subset_rows(&rows);
            Ok(GroupSummary {
                group_label: label,
                n: rows.len(),
                degenerate: rows.len() == 1,
                features: summarize_features(&sub),
            })
        })
        .collect()
}

fn rows_where<T>(xs: &[T], pred: impl Fn(&T) -> bool) -> Vec<usize> {
    xs.iter().enumerate().filter(|(_, x)| pred(x)).map(|(i, _)| i).collect()
}

fn summarize_features(frame: &CohortFrame) -> Vec<FeatureSummary> {
    frame
        .schema
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let mut s = FeatureSummary {
                name: spec.name.clone(),
                kind: spec.kind,
                unit: spec.unit.clone(),
                n_observed: 0,
                mean: None,
                sd: None,
                prevalence: None,
                levels: BTreeMap::new(),
            };
            match spec.kind {
                FeatureKind::Categorical => {
                    let obs = frame.observed_levels(j);
                    s.n_observed = obs.len();
                    let mut counts: HashMap<&str, usize> = HashMap::new();
                    for l in &obs {
                        *counts.entry(l).or_default() += 1;
                    }
                    s.levels = counts
                        .into_iter()
                        .map(|(k, c)| (k.to_string(), c as f64 / obs.len() as f64))
                        .collect();
                }
                FeatureKind::Numeric | FeatureKind::Binary => {
                    let obs = frame.observed_numeric(j);
                    s.n_observed = obs.len();
                    if !obs.is_empty() {
                        let m = stats::mean(&obs);
                        s.mean = Some(m);
                        s.sd = Some(stats::sample_sd(&obs));
                        if spec.kind == FeatureKind::Binary {
                            s.prevalence = Some(m);
                        }
                    }
                }
            }
            s
        })
        .collect()
}
