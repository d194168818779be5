//! Acceptance harness: one PASS/FAIL line per criterion. Exits non-zero
//! when any criterion fails. Tolerances are fixed below.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::oracles::{brute_force_auroc, point_segment_distance, pooled_t_squared, series_two_sided_p};
use tabrisk::cohort::Column;
use tabrisk::config::{DataSource, PipelineConfig};
use tabrisk::evaluate::MetricReport;
use tabrisk::interpret::{ale_first_order, cohort_comparison_table, welch_ttest, AleScale};
use tabrisk::metrics::{auroc, format_ci};
use tabrisk::models::{fit, Family, ModelSpec, ProbabilityModel};
use tabrisk::pipeline::{self, files};
use tabrisk::preprocess::Design;
use tabrisk::resample::{oversample, smote, split_indices, stratified_kfold, synthetic_count, test_size, SmoteConfig};
use tabrisk::select::anova_f;
use tabrisk::stats::{student_t_cdf, student_t_two_sided_p};
use tabrisk::synth::{self, Marginal};

const AUROC_TOL: f64 = 1e-12;
const AUROC_TIME_LIMIT_S: f64 = 5.0;
const ANOVA_REL_TOL: f64 = 1e-10;
const AFFINE_REL_TOL: f64 = 1e-9;
const LOGISTIC_GRAD_TOL: f64 = 1e-5;
const MLP_GRAD_TOL: f64 = 1e-4;
const SMOTE_DIST_TOL: f64 = 1e-9;
const NULL_AUROC_BAND: (f64, f64) = (0.45, 0.55);
const SENTINEL_SEEDS: u64 = 20;
const ALE_SLOPE_REL_TOL: f64 = 0.02;
const ALE_ZERO_TOL: f64 = 1e-12;
const ALE_CENTER_TOL: f64 = 1e-12;
const WELCH_P_TOL: f64 = 1e-6;
const T_CDF_TOL: f64 = 1e-10;
const NULL_REJECTION_BAND: (f64, f64) = (0.02, 0.08);
const DEMO_TIME_LIMIT_S: f64 = 300.0;
const DEMO_AUROC_BAR: f64 = 0.75;
const DEMO_SEED: u64 = 2024;
const REPORT_REPLICATES: usize = 2000;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(2..=50);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        // Eight score levels, so ties are frequent.
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..8u8)) / 8.0).collect();
        let fast = auroc(&scores, &labels).map_err(|e| e.to_string())?;
        worst = worst.max((fast - brute_force_auroc(&scores, &labels)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= AUROC_TOL, || format!("max |diff| {worst:e}"))?;
    ensure(secs < AUROC_TIME_LIMIT_S, || format!("took {secs:.2}s"))?;
    Ok(format!("200 instances, max |diff| {worst:e}, {secs:.3}s"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst, mut worst_affine): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let n = rng.random_range(4..60);
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 200.0 - 100.0).collect();
        let mut y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        y[..2].copy_from_slice(&[0, 0]);
        y[2..4].copy_from_slice(&[1, 1]);
        let f = anova_f(&x, &y).map_err(|e| e.to_string())?;
        worst = worst.max(rel(f, pooled_t_squared(&x, &y)));
        let (a, b) = (rng.random::<f64>() * 10.0 - 5.0, rng.random::<f64>() * 100.0 - 50.0);
        if a.abs() > 1e-3 {
            let z: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            worst_affine = worst_affine.max(rel(f, anova_f(&z, &y).map_err(|e| e.to_string())?));
        }
    }
    ensure(worst < ANOVA_REL_TOL, || format!("closed form rel err {worst:e}"))?;
    ensure(worst_affine < AFFINE_REL_TOL, || format!("affine rel err {worst_affine:e}"))?;
    Ok(format!("100 instances, rel err {worst:e}, affine rel err {worst_affine:e}"))
}

fn criterion_3() -> Outcome {
    let logistic = common::gradients::logistic_max_error(20);
    let mlp = common::gradients::mlp_max_error(20);
    ensure(logistic < LOGISTIC_GRAD_TOL, || format!("logistic rel err {logistic:e}"))?;
    ensure(mlp < MLP_GRAD_TOL, || format!("MLP rel err {mlp:e}"))?;
    Ok(format!("logistic {logistic:e}, MLP {mlp:e}"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut rows = 0usize;
    for trial in 0..100u64 {
        let (m, d) = (rng.random_range(6..40), rng.random_range(1..6));
        let x = Array2::from_shape_fn((m, d), |_| rng.random::<f64>() * 100.0 - 50.0);
        let n_syn = rng.random_range(1..80);
        let cfg = SmoteConfig { k_neighbors: 5, target_ratio: 1.0, seed: trial };
        let out = smote(x.view(), n_syn, &vec![false; d], &cfg).map_err(|e| e.to_string())?;
        ensure(out.synthetic.nrows() == n_syn, || "wrong synthetic row count".into())?;
        for (s, &(a, b)) in out.origins.iter().enumerate() {
            let p = out.synthetic.row(s).to_vec();
            worst = worst.max(point_segment_distance(&p, &x.row(a).to_vec(), &x.row(b).to_vec()));
            rows += 1;
        }
    }
    ensure(worst < SMOTE_DIST_TOL, || format!("max distance {worst:e}"))?;

    ensure(synthetic_count(100, 1000, 1.0) == 900, || "100/1000 at ratio 1 should add 900".into())?;
    for trial in 0..50u64 {
        let (n_min, n_maj) = (rng.random_range(6..60), rng.random_range(60..300));
        let ratio = [0.5, 0.75, 1.0][trial as usize % 3];
        let n = n_min + n_maj;
        let design = Design {
            columns: vec!["a".into(), "b".into()],
            sources: vec!["a".into(), "b".into()],
            binary: vec![false, true],
            x: Array2::from_shape_fn((n, 2), |(i, j)| if j == 1 { f64::from(u8::from(i % 3 == 0)) } else { i as f64 }),
            y: (0..n).map(|i| u8::from(i < n_min)).collect(),
            row_ids: (0..n).map(|i| i.to_string()).collect(),
        };
        let cfg = SmoteConfig { k_neighbors: 5, target_ratio: ratio, seed: trial };
        let (balanced, _) = oversample(&design, &cfg).map_err(|e| e.to_string())?;
        let pos = balanced.y.iter().filter(|&&v| v == 1).count();
        let target = ((ratio * n_maj as f64).round() as usize).max(n_min);
        ensure(pos == target, || format!("{n_min}/{n_maj} at {ratio}: {pos} minority rows, expected {target}"))?;
        ensure(balanced.y.len() - pos == n_maj, || "majority rows changed".into())?;
        ensure(balanced.x.column(1).iter().all(|&v| v == 0.0 || v == 1.0), || "binary column not 0/1".into())?;
    }
    Ok(format!("{rows} synthetic rows, max distance {worst:e}; counts exact on 50 designs"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut configs = 0;
    while configs < 100 {
        let n = rng.random_range(20..600);
        let prevalence = rng.random_range(0.05..0.6);
        let k = rng.random_range(2..8);
        let mut y: Vec<u8> = (0..n).map(|i| u8::from((i as f64) < (n as f64 * prevalence).round())).collect();
        y.shuffle(&mut rng);
        let pos = y.iter().filter(|&&v| v == 1).count();
        if pos < k || n - pos < k {
            continue;
        }
        configs += 1;
        let seed = rng.random();
        let p = pos as f64 / n as f64;
        let (train, test) = split_indices(&y, 0.3, seed).map_err(|e| e.to_string())?;
        ensure(test.len() == test_size(n, 0.3) && train.len() + test.len() == n, || "partition sizes".into())?;
        for (name, part) in [("train", &train), ("test", &test)] {
            let got = part.iter().filter(|&&i| y[i] == 1).count() as f64;
            ensure((got - p * part.len() as f64).abs() <= 1.0, || format!("{name}: {got} positives, n={n} p={p}"))?;
        }
        let folds = stratified_kfold(&y, k, seed).map_err(|e| e.to_string())?;
        for f in 0..k {
            let fp = (0..n).filter(|&i| folds[i] == f && y[i] == 1).count() as f64;
            ensure((fp - pos as f64 / k as f64).abs() <= 1.0, || format!("fold {f}: {fp} positives of {pos}, k={k}"))?;
        }
    }
    Ok("100 configurations within ±1".into())
}

fn quick_models(cfg: &mut PipelineConfig) {
    cfg.models.families = Family::SEVEN.to_vec();
    cfg.models.grids = common::quick_grids(&Family::SEVEN);
    cfg.selection.rf_n_estimators = 50;
    cfg.evaluation.bootstrap_replicates = 200;
    cfg.interpret.enabled = false;
}

fn criterion_6() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut aurocs: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in 0..SENTINEL_SEEDS {
        let dir = root.path().join(format!("seed{s}"));
        let mut cfg = PipelineConfig::demo(dir.join("out"), 1000 + s);
        quick_models(&mut cfg);
        let frame = synth::generate(&cfg.synth_spec().unwrap(), &cfg.generator_config().unwrap()).map_err(|e| e.to_string())?;
        let mut labels = frame.outcome().to_vec();
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(77 + s));
        let shuffled = frame.with_outcome(labels).map_err(|e| e.to_string())?;
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        let csv = dir.join("shuffled.csv");
        tabrisk::cohort::write_csv_file(&shuffled, &csv, &cfg.outcome_column).map_err(|e| e.to_string())?;
        cfg.data = DataSource::Csv {
            path: csv,
            schema: cfg.schema(),
            id_column: Some("row_id".into()),
        };
        pipeline::run(&cfg).map_err(|e| format!("seed {s}: {e}"))?;
        for m in read_metrics(&cfg.output_dir.join(files::METRICS_TEST))? {
            aurocs.entry(m.model).or_default().push(m.auroc);
        }
    }
    ensure(aurocs.len() == Family::SEVEN.len(), || format!("{} families reported", aurocs.len()))?;
    let mut summary = Vec::new();
    let mut bad = Vec::new();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (model, v) in &aurocs {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        lo = v.iter().copied().fold(lo, f64::min);
        hi = v.iter().copied().fold(hi, f64::max);
        summary.push(format!("{model} {mean:.3}"));
        if !(NULL_AUROC_BAND.0..=NULL_AUROC_BAND.1).contains(&mean) || v.len() != SENTINEL_SEEDS as usize {
            bad.push(format!("{model} mean {mean:.3} over {} runs", v.len()));
        }
    }
    ensure(bad.is_empty(), || bad.join(", "))?;
    Ok(format!("{SENTINEL_SEEDS} shuffled cohorts, mean test AUROC: {}; single runs span [{lo:.3}, {hi:.3}]", summary.join(", ")))
}

struct Linear {
    slope: f64,
}

impl ProbabilityModel for Linear {
    fn n_features(&self) -> usize {
        2
    }
    fn predict_proba(&self, x: ArrayView2<'_, f64>) -> tabrisk::Result<Vec<f64>> {
        // Feature 1 is ignored.
        Ok(x.rows().into_iter().map(|r| 0.2 + self.slope * r[0]).collect())
    }
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = Array2::from_shape_fn((10_000, 2), |_| rng.random::<f64>());
    let mock = Linear { slope: 0.5 };
    let curve = ale_first_order(&mock, x.view(), 0, "x0", 32, AleScale::Probability).map_err(|e| e.to_string())?;
    let last = curve.edges.len() - 1;
    let slope = (curve.effects[last] - curve.effects[0]) / (curve.edges[last] - curve.edges[0]);
    ensure(rel(slope, 0.5) < ALE_SLOPE_REL_TOL, || format!("slope {slope}"))?;
    let ignored = ale_first_order(&mock, x.view(), 1, "x1", 32, AleScale::Probability).map_err(|e| e.to_string())?;
    let max_ignored = ignored.effects.iter().map(|e| e.abs()).fold(0.0, f64::max);
    ensure(max_ignored <= ALE_ZERO_TOL, || format!("ignored feature ALE {max_ignored:e}"))?;

    let n = 300;
    let xf = Array2::from_shape_fn((n, 3), |_| rng.random::<f64>() * 2.0 - 1.0);
    let y: Vec<u8> = (0..n).map(|i| u8::from(xf[[i, 0]] - 0.5 * xf[[i, 1]] + 0.3 * rng.random::<f64>() > 0.1)).collect();
    let mut worst: f64 = 0.0;
    for family in Family::SEVEN {
        let model = fit(&ModelSpec::new(family, 3), xf.view(), &y).map_err(|e| format!("{family}: {e}"))?;
        for j in 0..3 {
            for scale in [AleScale::Probability, AleScale::Logit] {
                let c = ale_first_order(&model, xf.view(), j, "x", 20, scale).map_err(|e| format!("{family}: {e}"))?;
                worst = worst.max(c.weighted_mean().abs());
            }
        }
    }
    ensure(worst <= ALE_CENTER_TOL, || format!("centering error {worst:e}"))?;
    Ok(format!("slope {slope:.4} (true 0.5), ignored max {max_ignored:e}, centering max {worst:e} over 7 families"))
}

fn criterion_8() -> Outcome {
    let r = welch_ttest(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0]).map_err(|e| e.to_string())?;
    let exact = series_two_sided_p(1.0, 8);
    ensure((r.t + 1.0).abs() < 1e-12 && (r.df - 8.0).abs() < 1e-12, || format!("t {} df {}", r.t, r.df))?;
    ensure((r.p - exact).abs() < WELCH_P_TOL, || format!("p {} vs {exact}", r.p))?;
    ensure((r.p - 0.3466).abs() < 5e-5, || format!("p {} does not round to 0.3466", r.p))?;

    let mut worst: f64 = 0.0;
    let mut points = 0;
    for (i, df) in [1u32, 2, 3, 4, 5, 7, 8, 10, 15, 30].into_iter().enumerate() {
        for k in 0..5 {
            let t = -3.0 + 1.37 * k as f64 + 0.11 * i as f64;
            let two_sided = series_two_sided_p(t, df);
            let cdf = if t >= 0.0 { 1.0 - two_sided / 2.0 } else { two_sided / 2.0 };
            worst = worst.max((student_t_cdf(t, f64::from(df)) - cdf).abs());
            worst = worst.max((student_t_two_sided_p(t, f64::from(df)) - two_sided).abs());
            points += 1;
        }
    }
    ensure(worst < T_CDF_TOL, || format!("t-CDF error {worst:e}"))?;

    let spec = synth::builtin_paper_spec();
    let draw = |seed| synth::generate(&spec, &synth::GeneratorConfig::new(500, seed));
    let (mut rejections, mut tests) = (0usize, 0usize);
    for trial in 0..50u64 {
        let table = cohort_comparison_table(&draw(1000 + trial).unwrap(), &draw(5000 + trial).unwrap(), "a", "b").map_err(|e| e.to_string())?;
        rejections += table.rows.iter().filter(|r| r.test.p < 0.05).count();
        tests += table.rows.len();
    }
    let rate = rejections as f64 / tests as f64;
    ensure((NULL_REJECTION_BAND.0..=NULL_REJECTION_BAND.1).contains(&rate), || format!("null rejection rate {rate}"))?;
    Ok(format!("p {:.6} (exact {exact:.6}), t-CDF max err {worst:e} at {points} points, null rejection rate {rate:.3}", r.p))
}

/// Monte-Carlo AUROC of the true log-likelihood ratio of the generator.
/// Clipping of Gaussian features is ignored in the score.
fn bayes_auroc(n: usize, seed: u64) -> f64 {
    let spec = synth::builtin_paper_spec();
    let frame = synth::generate(&spec, &synth::GeneratorConfig::new(n, seed)).unwrap();
    let mut llr = vec![0.0; n];
    let log_normal = |x: f64, m: f64, s: f64| -((x - m) / s).powi(2) / 2.0 - s.ln();
    for fm in &spec.features {
        let j = frame.feature_index(&fm.feature.name).unwrap();
        for (i, score) in llr.iter_mut().enumerate() {
            *score += match (&fm.marginal, frame.column(j)) {
                (Marginal::Gaussian { mean_pos, sd_pos, mean_neg, sd_neg, .. }, Column::Numeric(v)) => {
                    log_normal(v[i], *mean_pos, *sd_pos) - log_normal(v[i], *mean_neg, *sd_neg)
                }
                (Marginal::Bernoulli { prevalence_pos: p, prevalence_neg: q }, Column::Numeric(v)) => {
                    if v[i] == 1.0 { (p / q).ln() } else { ((1.0 - p) / (1.0 - q)).ln() }
                }
                (Marginal::TwoLevel { level, prevalence_pos: p, prevalence_neg: q, .. }, Column::Categorical(v)) => {
                    if &v[i] == level { (p / q).ln() } else { ((1.0 - p) / (1.0 - q)).ln() }
                }
                _ => panic!("unexpected marginal/column pairing for {}", fm.feature.name),
            };
        }
    }
    auroc(&llr, frame.outcome()).unwrap()
}

struct DemoRun {
    dir: PathBuf,
    seconds: f64,
}

fn demo_run(threads: usize, dir: &Path) -> Result<DemoRun, String> {
    let cfg = PipelineConfig::demo(dir, DEMO_SEED);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
    let start = Instant::now();
    pool.install(|| pipeline::run(&cfg)).map_err(|e| e.to_string())?;
    Ok(DemoRun {
        dir: dir.to_path_buf(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

static SCRATCH: OnceLock<tempfile::TempDir> = OnceLock::new();
static SINGLE_THREAD: OnceLock<Result<DemoRun, String>> = OnceLock::new();

fn scratch() -> &'static Path {
    SCRATCH.get_or_init(|| tempfile::tempdir().unwrap()).path()
}

fn single_thread_demo() -> Result<&'static DemoRun, String> {
    SINGLE_THREAD.get_or_init(|| demo_run(1, &scratch().join("threads1"))).as_ref().map_err(Clone::clone)
}

fn read_metrics(path: &Path) -> Result<Vec<MetricReport>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn criterion_9() -> Outcome {
    let oracle = bayes_auroc(200_000, 9);
    ensure(oracle > DEMO_AUROC_BAR, || format!("Bayes AUROC {oracle:.3} is below the pass bar"))?;
    let run = single_thread_demo()?;
    ensure(run.seconds < DEMO_TIME_LIMIT_S, || format!("demo took {:.1}s", run.seconds))?;
    let test = read_metrics(&run.dir.join(files::METRICS_TEST))?;
    ensure(test.len() == Family::SEVEN.len(), || format!("{} models evaluated", test.len()))?;
    let logistic = test
        .iter()
        .find(|m| m.model == Family::Logistic.display_name())
        .ok_or("no logistic regression row")?;
    ensure(logistic.auroc >= DEMO_AUROC_BAR, || format!("logistic test AUROC {:.3}", logistic.auroc))?;
    ensure(run.dir.join(files::ALE).is_file() && run.dir.join(files::REPORT).is_file(), || "missing outputs".into())?;
    Ok(format!(
        "n=1535, 1 thread, {:.1}s; logistic test AUROC {:.3}; Bayes AUROC oracle {oracle:.3}",
        run.seconds, logistic.auroc
    ))
}

fn is_ci_cell(s: &str) -> bool {
    let num = |t: &str| t.len() == 5 && t.as_bytes()[1] == b'.' && t.chars().enumerate().all(|(i, c)| i == 1 || c.is_ascii_digit());
    let Some((point, rest)) = s.split_once(" (") else { return false };
    let Some(inner) = rest.strip_suffix(')') else { return false };
    let Some((lo, hi)) = inner.split_once("--") else { return false };
    num(point) && num(lo) && num(hi)
}

fn is_mean_sd_cell(s: &str) -> bool {
    let Some((mean, rest)) = s.split_once(" (") else { return false };
    let Some(sd) = rest.strip_suffix(')') else { return false };
    let two_dp = |t: &str| t.parse::<f64>().is_ok() && t.split_once('.').is_some_and(|(_, f)| f.len() == 2);
    two_dp(mean) && two_dp(sd)
}

fn criterion_10() -> Outcome {
    ensure(format_ci(0.825, 0.779, 0.867) == "0.825 (0.779--0.867)", || format_ci(0.825, 0.779, 0.867))?;
    let run = single_thread_demo()?;
    let cfg = PipelineConfig::demo(&run.dir, DEMO_SEED);
    ensure(cfg.evaluation.bootstrap_replicates == REPORT_REPLICATES, || "demo does not use 2000 replicates".into())?;
    let report = std::fs::read_to_string(run.dir.join(files::REPORT)).map_err(|e| e.to_string())?;
    let lines: Vec<&str> = report.lines().collect();
    let cells = |l: &str| -> Vec<String> { l.split('|').map(|c| c.trim().to_string()).collect() };

    let metric_headers: Vec<usize> = (0..lines.len()).filter(|&i| lines[i].starts_with("Model ") && lines[i].contains("AUROC (95% CI)")).collect();
    ensure(metric_headers.len() == 2, || format!("{} metric tables", metric_headers.len()))?;
    let mut ci_cells = 0;
    for &h in &metric_headers {
        ensure(cells(lines[h]) == tabrisk::report::METRIC_COLUMNS, || format!("header {:?}", lines[h]))?;
        for row in lines[h + 2..].iter().take_while(|l| l.contains('|')) {
            let c = cells(row);
            ensure(is_ci_cell(&c[1]), || format!("CI cell {:?}", c[1]))?;
            ci_cells += 1;
        }
    }
    ensure(ci_cells == 2 * Family::SEVEN.len(), || format!("{ci_cells} CI cells"))?;

    let cohort_headers: Vec<usize> = (0..lines.len()).filter(|&i| lines[i].starts_with("Feature ") && lines[i].contains("mean (SD)")).collect();
    ensure(cohort_headers.len() == 2, || format!("{} cohort tables", cohort_headers.len()))?;
    let mut mean_sd_rows = 0;
    for &h in &cohort_headers {
        let head = cells(lines[h]);
        ensure(head.len() == 5 && head[0] == "Feature" && head[1] == "Unit" && head[4] == "P-value", || format!("header {head:?}"))?;
        ensure(head[2].ends_with("mean (SD)") && head[3].ends_with("mean (SD)"), || format!("header {head:?}"))?;
        for row in lines[h + 2..].iter().take_while(|l| l.contains('|')) {
            let c = cells(row);
            ensure(is_mean_sd_cell(&c[2]) && is_mean_sd_cell(&c[3]), || format!("row {row:?}"))?;
            ensure(c[4] == "< 0.001" || c[4].parse::<f64>().is_ok(), || format!("p cell {:?}", c[4]))?;
            mean_sd_rows += 1;
        }
    }
    Ok(format!("{ci_cells} CI cells at {REPORT_REPLICATES} replicates, {mean_sd_rows} mean (SD) rows"))
}

fn criterion_11() -> Outcome {
    let a = single_thread_demo()?;
    let b = demo_run(4, &scratch().join("threads4"))?;
    let manifest = Path::new(files::MANIFEST);
    let sa = common::snapshot(&a.dir);
    let sb = common::snapshot(&b.dir);
    let names = |s: &[(PathBuf, Vec<u8>)]| s.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>();
    ensure(names(&sa) == names(&sb), || "different file sets".into())?;
    let mut compared = 0;
    for ((path, ca), (_, cb)) in sa.iter().zip(&sb) {
        if path == manifest {
            continue;
        }
        ensure(ca == cb, || format!("{} differs", path.display()))?;
        compared += 1;
    }
    let inventory = |dir: &Path| -> Result<serde_json::Value, String> {
        let text = std::fs::read_to_string(dir.join(files::MANIFEST)).map_err(|e| e.to_string())?;
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        Ok(v["files"].clone())
    };
    ensure(inventory(&a.dir)? == inventory(&b.dir)?, || "manifest inventories differ".into())?;
    Ok(format!("1 vs 4 threads: {compared} files byte-identical, manifest inventories equal"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("AUROC matches pair-counting oracle", criterion_1),
        ("ANOVA F closed form and affine invariance", criterion_2),
        ("logistic and MLP gradients", criterion_3),
        ("SMOTE geometry and counts", criterion_4),
        ("stratification bounds", criterion_5),
        ("leakage sentinel on shuffled labels", criterion_6),
        ("ALE analytic recovery and centering", criterion_7),
        ("Welch t-test, t-CDF and null calibration", criterion_8),
        ("end-to-end demo", criterion_9),
        ("report layout", criterion_10),
        ("determinism across thread counts", criterion_11),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failures > 0 {
        println!("{failures} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
