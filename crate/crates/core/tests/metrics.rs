mod common;

use common::oracles::brute_force_auroc;
use proptest::prelude::*;
use tabrisk::metrics::{auroc, bootstrap_ci, confusion_metrics, format_ci};

fn two_class_instance(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2..=max_n).prop_flat_map(|n| {
        // Scores on a coarse grid so ties are common.
        (prop::collection::vec(0u8..8, n), prop::collection::vec(0u8..2, n)).prop_filter_map("two classes", |(s, mut y)| {
            y[0] = 0;
            y[1] = 1;
            Some((s.into_iter().map(|v| f64::from(v) / 8.0).collect(), y))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn auroc_equals_pair_count((s, y) in two_class_instance(50)) {
        let a = auroc(&s, &y).unwrap();
        prop_assert!((a - brute_force_auroc(&s, &y)).abs() <= 1e-12);
    }

    #[test]
    fn auroc_invariant_to_increasing_transform((s, y) in two_class_instance(50)) {
        let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
        prop_assert_eq!(auroc(&s, &y).unwrap(), auroc(&t, &y).unwrap());
    }

    #[test]
    fn auroc_complement_without_ties(n in 2usize..40, seed in 0u64..1000) {
        // Distinct scores: a permutation of 0..n.
        let mut s: Vec<f64> = (0..n).map(|i| ((i as u64 * 7919 + seed) % 1_000_003) as f64).collect();
        s.sort_by(f64::total_cmp);
        s.dedup();
        let y: Vec<u8> = (0..s.len()).map(|i| u8::from((i as u64 * 31 + seed) % 3 == 0)).collect();
        prop_assume!(y.contains(&0) && y.contains(&1));
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        prop_assert!((auroc(&s, &y).unwrap() + auroc(&neg, &y).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn hand_counted_confusion_table() {
    // TP=2 FP=1 TN=6 FN=1
    let s = [0.9, 0.8, 0.7, 0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];
    let y = [1, 1, 0, 1, 0, 0, 0, 0, 0, 0];
    let c = confusion_metrics(&s, &y, 0.5).unwrap();
    assert!((c.sensitivity.unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!((c.specificity.unwrap() - 6.0 / 7.0).abs() < 1e-15);
    assert!((c.ppv.unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!((c.npv.unwrap() - 6.0 / 7.0).abs() < 1e-15);
    assert!((c.accuracy.unwrap() - 0.8).abs() < 1e-15);
}

#[test]
fn all_negative_predictions_flag_ppv() {
    let c = confusion_metrics(&[0.1, 0.2, 0.3], &[0, 1, 1], 0.5).unwrap();
    assert_eq!(c.sensitivity, Some(0.0));
    assert_eq!(c.specificity, Some(1.0));
    assert_eq!(c.ppv, None);
    assert_eq!(c.f1, None);
}

#[test]
fn ci_rendering() {
    assert_eq!(format_ci(0.825, 0.779, 0.867), "0.825 (0.779--0.867)");
}

fn noisy_scores(n: usize, seed: u64) -> (Vec<f64>, Vec<u8>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<u8> = (0..n).map(|i| u8::from(i % 4 == 0)).collect();
    let s = y.iter().map(|&v| f64::from(v) + 1.5 * rng.random::<f64>()).collect();
    (s, y)
}

#[test]
fn bootstrap_interval_contains_point_and_narrows_with_n() {
    let mut widths = [Vec::new(), Vec::new()];
    for trial in 0..50u64 {
        for (k, n) in [200usize, 2000].into_iter().enumerate() {
            let (s, y) = noisy_scores(n, trial * 2 + k as u64);
            let (lo, hi) = bootstrap_ci(&s, &y, auroc, 200, 0.05, trial).unwrap();
            let point = auroc(&s, &y).unwrap();
            assert!(lo <= hi);
            assert!(point >= lo - 0.02 && point <= hi + 0.02);
            widths[k].push(hi - lo);
        }
    }
    let median = |v: &mut Vec<f64>| tabrisk::stats::median(v).unwrap();
    assert!(median(&mut widths[1]) < median(&mut widths[0]));
}

#[test]
fn bootstrap_of_separated_scores_is_degenerate() {
    let s = [0.1, 0.2, 0.3, 0.6, 0.7, 0.8];
    let y = [0, 0, 0, 1, 1, 1];
    assert_eq!(bootstrap_ci(&s, &y, auroc, 2000, 0.05, 9).unwrap(), (1.0, 1.0));
}
