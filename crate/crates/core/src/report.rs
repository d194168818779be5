//! Text tables, CSV exports and SVG figures for pipeline outputs.

use std::fmt::Write as _;

use crate::error::Result;
use crate::evaluate::{CvResult, MetricReport};
use crate::interpret::{AblationResult, AleCurve, AleKind, AleScale, CohortTable};
use crate::metrics::{self, RocPoint};
use crate::select::SelectionReport;

/// Placeholder for metrics with a zero denominator.
pub const UNDEFINED: &str = "—";

pub const METRIC_COLUMNS: [&str; 8] = [
    "Model",
    "AUROC (95% CI)",
    "Accuracy",
    "F1-score",
    "Sensitivity",
    "Specificity",
    "PPV",
    "NPV",
];

/// Left-aligned columns separated by ` | `, with a dashed rule under the
/// header. Widths count characters, not bytes.
pub fn text_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| -> String {
        let padded: Vec<String> = cells
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        padded.join(" | ").trim_end().to_string()
    };
    let mut out = line(&mut headers.iter().copied());
    out.push('\n');
    out.push_str(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("-|-"));
    out.push('\n');
    for row in rows {
        out.push_str(&line(&mut row.iter().map(String::as_str)));
        out.push('\n');
    }
    out
}

pub fn format_metric(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| format!("{x:.3}"))
}

pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "< 0.001".to_string()
    } else {
        format!("{p:.3}")
    }
}

pub fn format_mean_sd(mean: f64, sd: f64) -> String {
    format!("{mean:.2} ({sd:.2})")
}

/// One performance row per model.
pub fn metrics_table(reports: &[MetricReport]) -> String {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                metrics::format_ci(r.auroc, r.auroc_ci.0, r.auroc_ci.1),
                format_metric(r.accuracy),
                format_metric(r.f1),
                format_metric(r.sensitivity),
                format_metric(r.specificity),
                format_metric(r.ppv),
                format_metric(r.npv),
            ]
        })
        .collect();
    text_table(&METRIC_COLUMNS, &rows)
}

pub fn cohort_table_text(table: &CohortTable) -> String {
    let a = format!("{} (n={}) mean (SD)", table.group_a, table.n_a);
    let b = format!("{} (n={}) mean (SD)", table.group_b, table.n_b);
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.feature.clone(),
                r.unit.clone(),
                format_mean_sd(r.test.mean_a, r.test.sd_a),
                format_mean_sd(r.test.mean_b, r.test.sd_b),
                format_p(r.test.p),
            ]
        })
        .collect();
    text_table(&["Feature", "Unit", &a, &b, "P-value"], &rows)
}

pub fn selection_table_text(report: &SelectionReport) -> String {
    let stage1: Vec<Vec<String>> = report
        .stage1
        .iter()
        .map(|s| vec![s.rank.to_string(), s.feature.clone(), format!("{:.4}", s.f_statistic)])
        .collect();
    let stage2: Vec<Vec<String>> = report
        .stage2
        .iter()
        .map(|s| {
            let kept = if report.final_features.contains(&s.feature) { "yes" } else { "no" };
            vec![s.rank.to_string(), s.feature.clone(), format!("{:.6}", s.importance), kept.to_string()]
        })
        .collect();
    let mut out = String::from("Stage 1: ANOVA F filter\n");
    out.push_str(&text_table(&["Rank", "Feature", "F"], &stage1));
    out.push_str("\nStage 2: random-forest Gini importance\n");
    out.push_str(&text_table(&["Rank", "Feature", "Importance", "Selected"], &stage2));
    if !report.dropped.is_empty() {
        let dropped: Vec<Vec<String>> = report
            .dropped
            .iter()
            .map(|d| vec![d.feature.clone(), d.stage.clone(), d.reason.clone()])
            .collect();
        out.push_str("\nDropped\n");
        out.push_str(&text_table(&["Feature", "Stage", "Reason"], &dropped));
    }
    out
}

/// Best grid point per family with its cross-validated scores.
pub fn cv_table_text(results: &[CvResult]) -> String {
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            let best = &r.points[r.best_index];
            let hp = best
                .hyperparameters
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(", ");
            let f1 = match (best.mean_f1, best.sd_f1) {
                (Some(m), Some(s)) => format!("{m:.3} ± {s:.3}"),
                _ => UNDEFINED.to_string(),
            };
            vec![
                r.family.display_name().to_string(),
                format!("{:.3} ± {:.3}", best.mean_auroc, best.sd_auroc),
                f1,
                hp,
            ]
        })
        .collect();
    text_table(&["Model", "CV AUROC", "CV F1-score", "Best hyperparameters"], &rows)
}

pub fn ablation_table_text(result: &AblationResult) -> String {
    let rows: Vec<Vec<String>> = result
        .by_drop()
        .into_iter()
        .map(|f| vec![f.feature.clone(), format!("{:.4}", f.mean_auroc), format!("{:+.4}", f.mean_delta)])
        .collect();
    let mut out = format!("Baseline AUROC: {:.4}\n", result.baseline_auroc);
    out.push_str(&text_table(&["Removed feature", "Mean AUROC", "Mean change"], &rows));
    out
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn roc_csv(points: &[RocPoint]) -> Result<String> {
    csv_string(
        &["threshold", "fpr", "tpr"],
        points.iter().map(|p| vec![p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()]),
    )
}

/// Multiple ROC curves in long format, one block per model.
pub fn roc_csv_multi(curves: &[(String, Vec<RocPoint>)]) -> Result<String> {
    csv_string(
        &["model", "threshold", "fpr", "tpr"],
        curves.iter().flat_map(|(m, pts)| {
            pts.iter()
                .map(move |p| vec![m.clone(), p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])
        }),
    )
}

pub fn ablation_csv(result: &AblationResult) -> Result<String> {
    let base = result
        .baseline_repeats
        .iter()
        .enumerate()
        .map(|(r, a)| vec!["(none)".to_string(), r.to_string(), a.to_string()]);
    let rest = result.features.iter().flat_map(|f| {
        f.repeat_aurocs
            .iter()
            .enumerate()
            .map(move |(r, a)| vec![f.feature.clone(), r.to_string(), a.to_string()])
    });
    csv_string(&["removed_feature", "repeat", "auroc"], base.chain(rest))
}

/// Edge, effect and the count of the bin ending at that edge (empty for
/// the first edge of a numeric curve).
pub fn ale_csv(curve: &AleCurve) -> Result<String> {
    let rows = (0..curve.edges.len()).map(|i| {
        let count = match curve.kind {
            AleKind::Numeric if i == 0 => String::new(),
            AleKind::Numeric => curve.counts[i - 1].to_string(),
            AleKind::Binary => curve.counts[i].to_string(),
        };
        let orig = curve
            .edges_original
            .as_ref()
            .map_or_else(String::new, |e| e[i].to_string());
        vec![curve.edges[i].to_string(), orig, curve.effects[i].to_string(), count]
    });
    csv_string(&["edge", "edge_original", "effect", "count"], rows)
}

// ---- SVG ----

const W: f64 = 480.0;
const H: f64 = 360.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Maps data coordinates onto the plot area.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    width: f64,
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        Self::with_width(x, y, W)
    }

    fn with_width(x: (f64, f64), y: (f64, f64), width: f64) -> Self {
        let pad = |(lo, hi): (f64, f64)| if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        Frame {
            x: pad(x),
            y: pad(y),
            width,
        }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (self.width - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn open(&self, title: &str, xlabel: &str, ylabel: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{H}" viewBox="0 0 {w} {H}" font-family="sans-serif" font-size="11">"#,
            w = self.width
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="13">{}</text>"#, self.width / 2.0, escape(title));
        let (x0, x1, y0, y1) = (LEFT, self.width - RIGHT, TOP, H - BOTTOM);
        let _ = writeln!(s, r#"<rect x="{x0}" y="{y0}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = self.x.0 + f * (self.x.1 - self.x.0);
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            let (gx, gy) = (self.px(xv), self.py(yv));
            let _ = writeln!(s, r#"<text x="{gx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, y1 + 15.0, tick(xv));
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 5.0, gy + 4.0, tick(yv));
        }
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 12.0, escape(xlabel));
        let _ = writeln!(
            s,
            r#"<text x="14" y="{c:.1}" text-anchor="middle" transform="rotate(-90 14 {c:.1})">{}</text>"#,
            escape(ylabel),
            c = (y0 + y1) / 2.0
        );
        s
    }

    fn polyline(&self, pts: impl IntoIterator<Item = (f64, f64)>, color: &str, extra: &str) -> String {
        let coords: Vec<String> = pts
            .into_iter()
            .map(|(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{extra}/>\n",
            coords.join(" ")
        )
    }
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".to_string() } else { s.to_string() }
}

fn range(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// ROC curves with a chance diagonal and a legend of AUROCs.
pub fn roc_svg(title: &str, curves: &[(String, f64, Vec<RocPoint>)]) -> String {
    let f = Frame::new((0.0, 1.0), (0.0, 1.0));
    let mut s = f.open(title, "1 - Specificity", "Sensitivity");
    s.push_str(&f.polyline([(0.0, 0.0), (1.0, 1.0)], "#999999", r#" stroke-dasharray="4 3""#));
    for (i, (name, auc, pts)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        s.push_str(&f.polyline(pts.iter().map(|p| (p.fpr, p.tpr)), color, ""));
        let ly = f.py(0.05) - 14.0 * (curves.len() - 1 - i) as f64;
        let lx = f.px(0.45);
        let _ = writeln!(s, r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/>"#, ly - 4.0, lx + 16.0, ly - 4.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}">{} (AUROC {auc:.3})</text>"#, lx + 20.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

/// Box per removed feature (quartiles, whiskers to min/max) plus a dashed
/// line at the baseline AUROC.
pub fn ablation_svg(title: &str, result: &AblationResult) -> String {
    let feats = result.by_drop();
    let n = feats.len().max(1);
    let width = (LEFT + RIGHT + 28.0 * n as f64).max(W);
    let (lo, hi) = range(
        feats
            .iter()
            .flat_map(|f| f.repeat_aurocs.iter().copied())
            .chain([result.baseline_auroc]),
    );
    let margin = ((hi - lo) * 0.1).max(0.005);
    let f = Frame::with_width((0.0, n as f64), (lo - margin, hi + margin), width);
    let mut s = f.open(title, "Removed feature", "AUROC");
    for (i, feat) in feats.iter().enumerate() {
        let mut v = feat.repeat_aurocs.clone();
        v.sort_by(f64::total_cmp);
        let q = |p| crate::stats::quantile_sorted(&v, p);
        let (q0, q1, q2, q3, q4) = (q(0.0), q(0.25), q(0.5), q(0.75), q(1.0));
        let cx = f.px(i as f64 + 0.5);
        let half = 0.3 * (f.px(1.0) - f.px(0.0));
        let _ = writeln!(s, r##"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="#333"/>"##, f.py(q0), f.py(q4));
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="#333"/>"##,
            cx - half,
            f.py(q3),
            2.0 * half,
            (f.py(q1) - f.py(q3)).max(0.5)
        );
        let _ = writeln!(s, r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#08306b" stroke-width="2"/>"##, cx - half, f.py(q2), cx + half, f.py(q2));
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{y:.1}" text-anchor="end" font-size="9" transform="rotate(-45 {cx:.2} {y:.1})">{}</text>"#,
            escape(&feat.feature),
            y = H - BOTTOM + 12.0
        );
    }
    let by = f.py(result.baseline_auroc);
    let _ = writeln!(
        s,
        r##"<line x1="{LEFT}" y1="{by:.2}" x2="{:.1}" y2="{by:.2}" stroke="#d62728" stroke-dasharray="6 4"/>"##,
        width - RIGHT
    );
    let _ = writeln!(s, r##"<text x="{:.1}" y="{:.2}" text-anchor="end" fill="#d62728">baseline {:.4}</text>"##, width - RIGHT - 4.0, by - 4.0, result.baseline_auroc);
    s.push_str("</svg>\n");
    s
}

/// ALE panel: a line over bin edges, or two bars for a binary feature.
pub fn ale_svg(curve: &AleCurve) -> String {
    let scale = match curve.scale {
        AleScale::Probability => "ALE (probability)",
        AleScale::Logit => "ALE (log-odds)",
    };
    let xs = curve.edges_original.as_ref().unwrap_or(&curve.edges);
    let (ylo, yhi) = range(curve.effects.iter().copied().chain([0.0]));
    let margin = ((yhi - ylo) * 0.1).max(1e-6);
    let title = format!("ALE: {}", curve.feature);
    let mut s;
    match curve.kind {
        AleKind::Numeric => {
            let f = Frame::new(range(xs.iter().copied()), (ylo - margin, yhi + margin));
            s = f.open(&title, &curve.feature, scale);
            s.push_str(&f.polyline([(f.x.0, 0.0), (f.x.1, 0.0)], "#999999", r#" stroke-dasharray="4 3""#));
            s.push_str(&f.polyline(xs.iter().copied().zip(curve.effects.iter().copied()), PALETTE[0], ""));
            for (&x, &e) in xs.iter().zip(&curve.effects) {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{}"/>"#, f.px(x), f.py(e), PALETTE[0]);
            }
        }
        AleKind::Binary => {
            let f = Frame::new((-0.5, 1.5), (ylo - margin, yhi + margin));
            s = f.open(&title, &curve.feature, scale);
            for (lvl, &e) in curve.effects.iter().enumerate() {
                let cx = f.px(lvl as f64);
                let (top, bottom) = (f.py(e.max(0.0)), f.py(e.min(0.0)));
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{top:.2}" width="40" height="{:.2}" fill="{}"/>"#,
                    cx - 20.0,
                    (bottom - top).max(0.5),
                    PALETTE[0]
                );
            }
            s.push_str(&f.polyline([(-0.5, 0.0), (1.5, 0.0)], "#999999", r#" stroke-dasharray="4 3""#));
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(model: &str, ppv: Option<f64>) -> MetricReport {
        MetricReport {
            model: model.into(),
            n: 10,
            auroc: 0.825,
            auroc_ci: (0.779, 0.867),
            accuracy: Some(0.746),
            f1: Some(0.48),
            sensitivity: Some(0.71),
            specificity: Some(0.752),
            ppv,
            npv: Some(0.93),
            threshold: 0.5,
            bootstrap_replicates: 2000,
        }
    }

    #[test]
    fn metrics_table_layout() {
        let t = metrics_table(&[report("LogisticRegression", Some(0.362)), report("KNN", None)]);
        let lines: Vec<&str> = t.lines().collect();
        let header: Vec<&str> = lines[0].split(" | ").map(str::trim).collect();
        assert_eq!(header, METRIC_COLUMNS);
        assert!(lines[2].contains("0.825 (0.779--0.867)"));
        assert!(lines[3].contains(UNDEFINED));
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn p_value_formatting() {
        assert_eq!(format_p(0.818), "0.818");
        assert_eq!(format_p(0.0004), "< 0.001");
        assert_eq!(format_p(1.0), "1.000");
        assert_eq!(format_mean_sd(68.581, 20.0), "68.58 (20.00)");
    }

    #[test]
    fn table_aligns_unicode() {
        let t = text_table(&["a", "b"], &[vec!["—".into(), "x".into()], vec!["long".into(), "y".into()]]);
        let bars: Vec<usize> = t.lines().filter(|l| !l.starts_with('-')).map(|l| l.chars().position(|c| c == '|').unwrap()).collect();
        assert!(bars.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn csv_and_svg_are_well_formed() {
        let pts = vec![
            RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 },
            RocPoint { threshold: 0.5, fpr: 0.5, tpr: 1.0 },
            RocPoint { threshold: 0.1, fpr: 1.0, tpr: 1.0 },
        ];
        let c = roc_csv(&pts).unwrap();
        assert_eq!(c.lines().count(), 4);
        assert!(c.starts_with("threshold,fpr,tpr\n"));
        let s = roc_svg("ROC <test>", &[("m&m".into(), 0.75, pts)]);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("ROC &lt;test&gt;") && s.contains("m&amp;m"));
    }
}
