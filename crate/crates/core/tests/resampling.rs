mod common;

use common::oracles::point_segment_distance;
use ndarray::Array2;
use proptest::prelude::*;
use tabrisk::resample::{smote, split_indices, stratified_kfold, synthetic_count, test_size, SmoteConfig};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn smote_points_lie_on_their_segments(m in 6usize..30, d in 1usize..6, n_syn in 0usize..60, seed in 0u64..10_000) {
        let x = Array2::from_shape_fn((m, d), |(i, j)| (((i * 131 + j * 17) as u64 + seed) % 1009) as f64 / 10.0 - 50.0);
        let cfg = SmoteConfig { k_neighbors: 5, target_ratio: 1.0, seed };
        let out = smote(x.view(), n_syn, &vec![false; d], &cfg).unwrap();
        prop_assert_eq!(out.synthetic.nrows(), n_syn);
        for (s, &(a, b)) in out.origins.iter().enumerate() {
            prop_assert!(a != b);
            let p = out.synthetic.row(s).to_vec();
            let dist = point_segment_distance(&p, &x.row(a).to_vec(), &x.row(b).to_vec());
            prop_assert!(dist < 1e-9, "distance {}", dist);
        }
    }

    #[test]
    fn synthetic_count_hits_target_ratio(min in 1usize..500, extra in 0usize..2000, ratio in 0.1f64..1.0) {
        let maj = min + extra;
        let k = synthetic_count(min, maj, ratio);
        let target = (ratio * maj as f64).round() as usize;
        prop_assert_eq!(k, target.saturating_sub(min));
    }

    #[test]
    fn stratification_bounds(n in 20usize..600, prevalence in 0.05f64..0.6, k in 2usize..8, seed in 0u64..1000) {
        let y: Vec<u8> = (0..n).map(|i| u8::from(((i as f64 + 0.5) * prevalence).floor() < (((i + 1) as f64 + 0.5) * prevalence).floor())).collect();
        prop_assume!(y.iter().filter(|&&v| v == 1).count() >= k && y.iter().filter(|&&v| v == 0).count() >= k);
        let pos = y.iter().filter(|&&v| v == 1).count() as f64;
        let p = pos / n as f64;

        let (train, test) = split_indices(&y, 0.3, seed).unwrap();
        prop_assert_eq!(test.len(), test_size(n, 0.3));
        prop_assert_eq!(train.len() + test.len(), n);
        let test_pos = test.iter().filter(|&&i| y[i] == 1).count() as f64;
        prop_assert!((test_pos - p * test.len() as f64).abs() <= 1.0);

        let folds = stratified_kfold(&y, k, seed).unwrap();
        for f in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
            let fp = members.iter().filter(|&&i| y[i] == 1).count() as f64;
            prop_assert!((fp - pos / k as f64).abs() <= 1.0, "fold {} has {} positives of {}", f, fp, pos);
            prop_assert!((members.len() as f64 - n as f64 / k as f64).abs() <= 2.0);
        }
    }
}
