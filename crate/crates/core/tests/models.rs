mod common;

use ndarray::{Array2, ArrayView2};
use tabrisk::evaluate::{expand_grid, grid_search_cv, Grid};
use tabrisk::models::{fit, predict_proba, Family, HyperValue, ModelArtifact, ModelSpec};
use tabrisk::preprocess::Design;
use tabrisk::resample::{stratified_kfold, SmoteConfig};

fn data(n: usize, d: usize, seed: u64) -> (Array2<f64>, Vec<u8>) {
    common::gradients::random_problem(n, d, seed)
}

#[test]
fn logistic_gradient_matches_central_differences() {
    let worst = common::gradients::logistic_max_error(20);
    assert!(worst < 1e-5, "max relative error {worst}");
}

#[test]
fn mlp_gradient_matches_central_differences() {
    let worst = common::gradients::mlp_max_error(20);
    assert!(worst < 1e-4, "max relative error {worst}");
}

fn quick_spec(family: Family, seed: u64) -> ModelSpec {
    let s = ModelSpec::new(family, seed);
    match family {
        Family::RandomForest => s.with("n_estimators", 20.0),
        Family::Mlp => s.with("epochs", 20.0).with("hidden_units", 8.0),
        f if f.is_gbdt() => s.with("n_estimators", 20.0).with("subsample", 0.8),
        _ => s,
    }
}

#[test]
fn artifacts_round_trip_with_bit_identical_predictions() {
    let (x, y) = data(120, 4, 1);
    let (probe, _) = data(50, 4, 2);
    for family in Family::ALL {
        let m = fit(&quick_spec(family, 3), x.view(), &y).unwrap();
        let back = ModelArtifact::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m, "{family}");
        let a = predict_proba(&m, probe.view()).unwrap();
        let b = predict_proba(&back, probe.view()).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()), "{family}");
        assert!(a.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}

#[test]
fn same_seed_same_artifact() {
    let (x, y) = data(100, 3, 4);
    for family in Family::ALL {
        let a = fit(&quick_spec(family, 9), x.view(), &y).unwrap();
        let b = fit(&quick_spec(family, 9), x.view(), &y).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap(), "{family}");
    }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn fits_do_not_depend_on_thread_count() {
    let (x, y) = data(150, 4, 5);
    for family in [Family::RandomForest, Family::GbdtLeafwise, Family::GbdtOrdered, Family::Mlp] {
        let one = in_pool(1, || fit(&quick_spec(family, 1), x.view(), &y).unwrap().to_json().unwrap());
        let three = in_pool(3, || fit(&quick_spec(family, 1), x.view(), &y).unwrap().to_json().unwrap());
        assert_eq!(one, three, "{family}");
    }
}

fn design(x: Array2<f64>, y: Vec<u8>) -> Design {
    let d = x.ncols();
    Design {
        columns: (0..d).map(|j| format!("x{j}")).collect(),
        sources: (0..d).map(|j| format!("x{j}")).collect(),
        binary: vec![false; d],
        row_ids: (0..x.nrows()).map(|i| i.to_string()).collect(),
        x,
        y,
    }
}

#[test]
fn grid_search_is_thread_independent_and_prefers_weak_regularization() {
    let (x, y) = data(200, 4, 6);
    let train = design(x, y);
    let folds = stratified_kfold(&train.y, 5, 1).unwrap();
    let grid: Grid = [("C".to_string(), vec![HyperValue::Number(1e-4), HyperValue::Number(1.0)])].into_iter().collect();
    let smote = SmoteConfig::new(4);
    let run = || grid_search_cv(Family::Logistic, &grid, &train, &folds, 5, Some(&smote), 0.5, 11).unwrap();
    let a = in_pool(1, run);
    let b = in_pool(4, run);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.points.len(), expand_grid(&grid).len());
    assert!(a.points.iter().all(|p| p.fold_auroc.len() == 5));
    assert_eq!(a.best["C"], HyperValue::Number(1.0));
}

#[test]
fn grid_of_one_point_is_the_best() {
    let (x, y) = data(100, 2, 7);
    let train = design(x, y);
    let folds = stratified_kfold(&train.y, 5, 1).unwrap();
    let grid: Grid = [("var_floor".to_string(), vec![HyperValue::Number(1e-9)])].into_iter().collect();
    let r = grid_search_cv(Family::GaussianNb, &grid, &train, &folds, 5, None, 0.5, 0).unwrap();
    assert_eq!(r.best_index, 0);
    assert_eq!(r.points[0].fold_auroc.len(), 5);
}

#[test]
fn single_class_training_is_rejected() {
    let x = Array2::<f64>::zeros((10, 2));
    for family in Family::ALL {
        assert!(fit(&quick_spec(family, 0), x.view(), &[0; 10]).is_err());
    }
    let _: ArrayView2<f64> = x.view();
}
