use proptest::prelude::*;
use sbd_core::analysis::boundary_metrics;
use sbd_core::{train_count_predictor, BoundarySet, Predictor, PredictorModel, Token, Trajectory};

fn boundary_set() -> impl Strategy<Value = BoundarySet> {
    proptest::collection::btree_set(1usize..300, 0..25)
        .prop_map(|s| BoundarySet::from_indices("t", s).unwrap())
}

fn tokens(vocab: Token, len: usize) -> impl Strategy<Value = Vec<Token>> {
    proptest::collection::vec(0..vocab, len)
}

proptest! {
    #[test]
    fn f1_is_symmetric(a in boundary_set(), b in boundary_set(), tol in 0i64..8) {
        let ab = boundary_metrics(&a, &b, tol).unwrap();
        let ba = boundary_metrics(&b, &a, tol).unwrap();
        prop_assert_eq!(ab.precision, ba.recall);
        prop_assert_eq!(ab.recall, ba.precision);
        prop_assert!((ab.f1 - ba.f1).abs() < 1e-15);
        // One-to-one within tolerance.
        let mut preds: Vec<usize> = ab.matched_pairs.iter().map(|p| p.0).collect();
        let mut trues: Vec<usize> = ab.matched_pairs.iter().map(|p| p.1).collect();
        preds.dedup();
        trues.sort_unstable();
        trues.dedup();
        prop_assert_eq!(preds.len(), ab.matched_pairs.len());
        prop_assert_eq!(trues.len(), ab.matched_pairs.len());
        prop_assert!(ab.matched_pairs.iter().all(|(p, t)| p.abs_diff(*t) as i64 <= tol));
    }

    #[test]
    fn count_predictions_are_positive_distributions(
        (obs, acts) in (5usize..60).prop_flat_map(|n| (tokens(4, n), tokens(3, n))),
        order in 0usize..4,
        alpha in 0.01f64..3.0,
        probe in tokens(4, 6),
    ) {
        let t = Trajectory::from_tokens("p", 4, 3, &obs, &acts);
        let model = train_count_predictor(&[t], order, alpha).unwrap();
        let mut s = model.session(8);
        for (i, &o) in probe.iter().enumerate() {
            let d = s.predict(o);
            prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(d.iter().all(|&p| p > 0.0));
            s.observe(o, (i % 3) as Token);
        }
    }

    #[test]
    fn predictions_depend_only_on_the_window(
        (obs, acts) in (10usize..40).prop_flat_map(|n| (tokens(3, n), tokens(2, n))),
        prefix_a in tokens(3, 5),
        prefix_b in tokens(3, 2),
        tail in tokens(3, 3),
        probe in 0u32..3,
    ) {
        let t = Trajectory::from_tokens("w", 3, 2, &obs, &acts);
        let model = train_count_predictor(&[t], 3, 1.0).unwrap();
        let run = |prefix: &[Token]| {
            let mut s = model.session(3);
            for &o in prefix.iter().chain(&tail) {
                s.observe(o, 0);
            }
            s.predict(probe)
        };
        prop_assert_eq!(run(&prefix_a), run(&prefix_b));
    }
}
