#![allow(dead_code)]

pub mod gradients;
pub mod oracles;

use std::path::{Path, PathBuf};

use tabrisk::config::{DataSource, PipelineConfig};
use tabrisk::evaluate::Grid;
use tabrisk::models::{Family, HyperValue};

fn grid(pairs: &[(&str, HyperValue)]) -> Grid {
    pairs.iter().map(|(k, v)| (k.to_string(), vec![v.clone()])).collect()
}

/// One grid point per family, sized so a full run takes a few seconds.
pub fn quick_grids(families: &[Family]) -> std::collections::BTreeMap<Family, Grid> {
    use HyperValue::{Number as N, Text as T};
    families
        .iter()
        .map(|&f| {
            let g = match f {
                Family::Logistic => grid(&[("C", N(1.0)), ("penalty", T("l2".into()))]),
                Family::RandomForest => grid(&[("n_estimators", N(50.0))]),
                Family::Knn => grid(&[("k", N(15.0))]),
                Family::Mlp => grid(&[("epochs", N(60.0)), ("hidden_units", N(16.0))]),
                Family::GaussianNb => grid(&[("var_floor", N(1e-9))]),
                _ => grid(&[("n_estimators", N(40.0)), ("max_depth", N(2.0))]),
            };
            (f, g)
        })
        .collect()
}

pub fn small_config(out: &Path, seed: u64, n_rows: usize, families: &[Family]) -> PipelineConfig {
    let mut cfg = PipelineConfig::demo(out, seed);
    if let DataSource::Synth { n_rows: n, .. } = &mut cfg.data {
        *n = n_rows;
    }
    cfg.models.families = families.to_vec();
    cfg.models.grids = quick_grids(families);
    cfg.evaluation.bootstrap_replicates = 200;
    cfg.interpret.ablation_repeats = 3;
    cfg.selection.rf_n_estimators = 50;
    cfg
}

/// Every file under `root`, relative path and contents, sorted by path.
pub fn snapshot(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}
