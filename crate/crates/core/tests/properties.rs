use ndarray::Array2;
use proptest::prelude::*;

use stabsel::data::{load_matrix, restrict, save_matrix, standardize, MatrixFormat};
use stabsel::evaluation::roc_auc;
use stabsel::stability::{rank_top_k, scores_from_sets};
use stabsel::synthetic::flip_labels;
use stabsel::{Dataset, IndexSet};

fn dataset() -> impl Strategy<Value = Dataset> {
    (3usize..12, 1usize..6).prop_flat_map(|(n, p)| {
        (
            proptest::collection::vec(-1e3f64..1e3, n * p),
            proptest::collection::vec(0u8..2, n),
        )
            .prop_map(move |(vals, mut y)| {
                y[0] = 0;
                y[1] = 1;
                Dataset::with_default_ids(Array2::from_shape_vec((n, p), vals).unwrap(), y).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standardize_is_idempotent(d in dataset()) {
        let (once, _) = standardize(&d);
        let (twice, _) = standardize(&once);
        for (a, b) in once.x().iter().zip(twice.x()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn binary_round_trip_is_bitwise(d in dataset()) {
        let file = tempfile::Builder::new().suffix(".bin").tempfile().unwrap();
        save_matrix(&d, file.path(), MatrixFormat::BinaryF64).unwrap();
        let back = load_matrix(file.path(), MatrixFormat::BinaryF64).unwrap();
        prop_assert_eq!(back.x().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), d.x().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(back, d);
    }

    #[test]
    fn restrict_composes_and_keeps_feature_ids(d in dataset(), picks in proptest::collection::vec(any::<bool>(), 6)) {
        let cols: IndexSet = (0..d.p()).filter(|&j| picks[j % picks.len()]).collect();
        prop_assume!(!cols.is_empty());
        let rows: Vec<usize> = (0..d.n()).rev().collect();
        let sub = restrict(&d, &rows, &cols).unwrap();
        for (local, &orig) in cols.as_slice().iter().enumerate() {
            prop_assert_eq!(&sub.feature_ids()[local], &d.feature_ids()[orig]);
        }
        let inner = IndexSet::from_unsorted(vec![0]);
        let twice = restrict(&sub, &[1, 0], &inner).unwrap();
        let direct = restrict(&d, &[rows[1], rows[0]], &inner.map_through(cols.as_slice())).unwrap();
        prop_assert_eq!(twice, direct);
    }

    #[test]
    fn scores_are_order_free(sets in proptest::collection::vec(proptest::collection::btree_set(0usize..15, 0..6), 1..20)) {
        let sets: Vec<IndexSet> = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let mut rev = sets.clone();
        rev.reverse();
        prop_assert_eq!(scores_from_sets(&sets, 15).unwrap(), scores_from_sets(&rev, 15).unwrap());
    }

    #[test]
    fn top_k_matches_sort_then_cut(scores in proptest::collection::vec(0u8..5, 1..30), k_frac in 0.0f64..1.0) {
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let k = 1 + ((scores.len() - 1) as f64 * k_frac) as usize;
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        let oracle: IndexSet = idx.into_iter().take(k).collect();
        prop_assert_eq!(rank_top_k(&scores, k).unwrap(), oracle);
    }

    #[test]
    fn auc_is_invariant_under_increasing_maps(scores in proptest::collection::vec(-5.0f64..5.0, 4..40)) {
        let labels: Vec<u8> = (0..scores.len()).map(|i| (i % 2) as u8).collect();
        let a = roc_auc(&scores, &labels).unwrap().auc;
        let mapped: Vec<f64> = scores.iter().map(|s| s.powi(3) + 2.0 * s).collect();
        prop_assert_eq!(roc_auc(&mapped, &labels).unwrap().auc, a);
    }

    #[test]
    fn flips_have_exact_hamming_distance(y in proptest::collection::vec(0u8..2, 1..60), k_frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let k = (y.len() as f64 * k_frac) as usize;
        let f = flip_labels(&y, k, seed).unwrap();
        prop_assert_eq!(f.iter().zip(&y).filter(|(a, b)| a != b).count(), k);
    }
}
