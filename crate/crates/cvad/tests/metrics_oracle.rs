//! Metric implementations against independent oracles: pairwise Mann-Whitney
//! AUROC, exhaustive G-Mean threshold scans, and a dual implementation of the
//! bootstrap resampling stream.

mod common;

use common::{exhaustive_gmean, mann_whitney_auroc, random_labeled_set};
use cvad::metrics::{auroc, bootstrap, gmean_threshold, roc_curve, LabeledScores};
use cvad::rng::Rng;

#[test]
fn auroc_matches_pairwise_oracle_with_ties() {
    let mut rng = Rng::new(0xa0c);
    for case in 0..300 {
        let (scores, labels) = random_labeled_set(&mut rng, 120, case % 2 == 0);
        let ls = LabeledScores::new(scores.clone(), labels.clone()).unwrap();
        let fast = auroc(&ls).unwrap();
        let oracle = mann_whitney_auroc(&scores, &labels);
        assert!(
            (fast - oracle).abs() <= 1e-12,
            "case {case}: trapezoid {fast} vs pairwise {oracle}"
        );
    }
}

#[test]
fn gmean_matches_exhaustive_scan() {
    let mut rng = Rng::new(0x93a);
    for case in 0..300 {
        let (scores, labels) = random_labeled_set(&mut rng, 120, case % 2 == 0);
        let ls = LabeledScores::new(scores.clone(), labels.clone()).unwrap();
        let point = gmean_threshold(&roc_curve(&ls).unwrap());
        let got = (point.tpr * (1.0 - point.fpr)).sqrt();
        let (want, _, _) = exhaustive_gmean(&scores, &labels);
        assert!(
            (got - want).abs() <= 1e-12,
            "case {case}: curve argmax {got} vs exhaustive {want}"
        );
    }
}

#[test]
fn auroc_invariant_under_monotone_transforms() {
    let mut rng = Rng::new(0x7a2);
    for _ in 0..100 {
        let (scores, labels) = random_labeled_set(&mut rng, 80, false);
        let base = auroc(&LabeledScores::new(scores.clone(), labels.clone()).unwrap()).unwrap();
        let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        let affine: Vec<f64> = scores.iter().map(|s| 3.5 * s + 11.0).collect();
        let e = auroc(&LabeledScores::new(exp, labels.clone()).unwrap()).unwrap();
        let a = auroc(&LabeledScores::new(affine, labels.clone()).unwrap()).unwrap();
        assert!((base - e).abs() <= 1e-12);
        assert!((base - a).abs() <= 1e-12);
    }
}

#[test]
fn auroc_complement_for_tie_free_scores() {
    let mut rng = Rng::new(0x55);
    for _ in 0..100 {
        let (scores, labels) = random_labeled_set(&mut rng, 60, false);
        let pos = auroc(&LabeledScores::new(scores.clone(), labels.clone()).unwrap()).unwrap();
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        let neg = auroc(&LabeledScores::new(negated, labels.clone()).unwrap()).unwrap();
        assert!((pos + neg - 1.0).abs() <= 1e-12, "{pos} + {neg} != 1");
    }
}

/// Reimplementation of the documented bootstrap resampling contract: per
/// round, n index draws via `below(n)` from `Rng::stream(seed, [0x626f6f74])`,
/// whole round re-drawn while single-class.
#[test]
fn bootstrap_matches_dual_implementation_of_the_stream() {
    let mut rng = Rng::new(0xb00);
    let (scores, labels) = random_labeled_set(&mut rng, 200, false);
    let ls = LabeledScores::new(scores.clone(), labels.clone()).unwrap();
    let rounds = 10;
    let seed = 99;
    let got = bootstrap(&ls, rounds, seed).unwrap();

    let mut stream = Rng::stream(seed, &[0x626f_6f74]);
    let n = scores.len();
    let mut aucs = Vec::new();
    let mut tprs = Vec::new();
    let mut fprs = Vec::new();
    for _ in 0..rounds {
        let (s, l) = loop {
            let mut s = Vec::with_capacity(n);
            let mut l = Vec::with_capacity(n);
            for _ in 0..n {
                let idx = stream.below(n as u64) as usize;
                s.push(scores[idx]);
                l.push(labels[idx]);
            }
            if l.contains(&0) && l.contains(&1) {
                break (s, l);
            }
        };
        aucs.push(mann_whitney_auroc(&s, &l));
        let (_, fpr, tpr) = exhaustive_gmean(&s, &l);
        tprs.push(tpr);
        fprs.push(fpr);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let std = |v: &[f64]| {
        let m = mean(v);
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
    };
    assert!((got.auc_mean - mean(&aucs)).abs() <= 1e-12);
    assert!((got.auc_std - std(&aucs)).abs() <= 1e-12);
    assert!((got.tpr_mean - mean(&tprs)).abs() <= 1e-12);
    assert!((got.fpr_mean - mean(&fprs)).abs() <= 1e-12);
}

#[test]
fn bootstrap_is_seed_deterministic() {
    let mut rng = Rng::new(0xdef);
    let (scores, labels) = random_labeled_set(&mut rng, 100, true);
    let ls = LabeledScores::new(scores, labels).unwrap();
    assert_eq!(
        bootstrap(&ls, 10, 5).unwrap(),
        bootstrap(&ls, 10, 5).unwrap()
    );
    assert_ne!(
        bootstrap(&ls, 10, 5).unwrap(),
        bootstrap(&ls, 10, 6).unwrap()
    );
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    fn labeled_set() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        proptest::collection::vec((0.0f64..1.0, 0u8..2), 4..80).prop_filter_map(
            "needs both classes",
            |pairs| {
                let (scores, labels): (Vec<f64>, Vec<u8>) = pairs.into_iter().unzip();
                (labels.contains(&0) && labels.contains(&1)).then_some((scores, labels))
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn auroc_in_unit_interval((scores, labels) in labeled_set()) {
            let a = auroc(&LabeledScores::new(scores, labels).unwrap()).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn roc_curve_monotone((scores, labels) in labeled_set()) {
            let curve = roc_curve(&LabeledScores::new(scores, labels).unwrap()).unwrap();
            prop_assert_eq!(curve.points.first().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
            prop_assert_eq!(curve.points.last().map(|p| (p.fpr, p.tpr)), Some((0.0, 0.0)));
            for pair in curve.points.windows(2) {
                prop_assert!(pair[0].fpr >= pair[1].fpr);
                prop_assert!(pair[0].tpr >= pair[1].tpr);
            }
        }

        #[test]
        fn gmean_point_lies_on_curve((scores, labels) in labeled_set()) {
            let curve = roc_curve(&LabeledScores::new(scores, labels).unwrap()).unwrap();
            let best = gmean_threshold(&curve);
            prop_assert!(curve.points.contains(&best));
        }
    }
}
