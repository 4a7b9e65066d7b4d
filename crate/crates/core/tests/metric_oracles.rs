use proptest::prelude::*;
use qvf_core::metrics::{auc_roc, confusion, f1, trapezoid_auc, MetricsReport};
use qvf_core::rng::SplitMix64;

/// Pairwise definition: P(score_pos > score_neg) + ½ P(tie).
fn brute_force_auc(labels: &[u8], scores: &[f64]) -> f64 {
    let (mut count2, mut p, mut n) = (0u64, 0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li == 1 {
            p += 1;
        } else {
            n += 1;
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj == 0 {
                count2 += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    count2 as f64 / (2 * p * n) as f64
}

fn random_case(rng: &mut SplitMix64, n: usize, levels: usize) -> (Vec<u8>, Vec<f64>) {
    let mut labels: Vec<u8> = (0..n).map(|_| rng.below(2) as u8).collect();
    labels[0] = 0;
    labels[1] = 1;
    let scores = (0..n).map(|_| rng.below(levels) as f64 / levels as f64).collect();
    (labels, scores)
}

#[test]
fn auc_equals_pairwise_brute_force_exactly() {
    let mut rng = SplitMix64::new(77);
    for case in 0..200 {
        let n = 2 + rng.below(120);
        // Few levels force many ties.
        let levels = if case % 2 == 0 { 5 } else { 1_000_000 };
        let (labels, scores) = random_case(&mut rng, n, levels);
        let auc = auc_roc(&labels, &scores).unwrap().auc;
        assert_eq!(auc, brute_force_auc(&labels, &scores), "case {case}");
    }
}

#[test]
fn published_f1_triple() {
    let v = f1(0.9060, 0.9298);
    assert!((v - 0.9177).abs() < 1e-4, "{v}");
}

#[test]
fn report_from_perfect_scores() {
    let labels = [0, 1, 1, 0];
    let r = MetricsReport::from_scores("test", Some(1), &labels, &[0.1, 0.9, 0.8, 0.2], 0.5).unwrap();
    assert_eq!((r.accuracy, r.precision, r.recall, r.f1, r.auc), (1.0, 1.0, 1.0, 1.0, 1.0));
    assert!(r.warnings.is_empty());
}

#[test]
fn degenerate_predictions_warn_instead_of_failing() {
    let r = MetricsReport::from_scores("val", None, &[0, 1], &[0.1, 0.2], 0.5).unwrap();
    assert_eq!(r.precision, 0.0);
    assert!(!r.warnings.is_empty());
    assert!(auc_roc(&[1, 1], &[0.1, 0.2]).is_err());
}

proptest! {
    #[test]
    fn auc_is_invariant_under_monotone_maps(seed in any::<u64>(), n in 2usize..80) {
        let mut rng = SplitMix64::new(seed);
        let (labels, scores) = random_case(&mut rng, n, 7);
        let a = auc_roc(&labels, &scores).unwrap().auc;
        let mapped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 10.0).collect();
        prop_assert_eq!(a, auc_roc(&labels, &mapped).unwrap().auc);
    }

    #[test]
    fn auc_complements_under_negation(seed in any::<u64>(), n in 2usize..80) {
        let mut rng = SplitMix64::new(seed);
        let (labels, scores) = random_case(&mut rng, n, 9);
        let a = auc_roc(&labels, &scores).unwrap().auc;
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((a + auc_roc(&labels, &neg).unwrap().auc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_over_curve_matches_rank_auc(seed in any::<u64>(), n in 2usize..80) {
        let mut rng = SplitMix64::new(seed);
        let (labels, scores) = random_case(&mut rng, n, 6);
        let roc = auc_roc(&labels, &scores).unwrap();
        prop_assert!((trapezoid_auc(&roc.points) - roc.auc).abs() < 1e-12);
        prop_assert_eq!(roc.points.first().copied(), Some((0.0, 0.0)));
        prop_assert_eq!(roc.points.last().copied(), Some((1.0, 1.0)));
    }

    #[test]
    fn confusion_sums_to_total(seed in any::<u64>(), n in 1usize..100) {
        let mut rng = SplitMix64::new(seed);
        let labels: Vec<u8> = (0..n).map(|_| rng.below(2) as u8).collect();
        let preds: Vec<u8> = (0..n).map(|_| rng.below(2) as u8).collect();
        let c = confusion(&labels, &preds).unwrap();
        prop_assert_eq!(c.total(), n);
    }

    #[test]
    fn f1_is_bounded_by_its_inputs(p in 0.0f64..=1.0, r in 0.0f64..=1.0) {
        let v = f1(p, r);
        prop_assert!(v <= p.max(r) + 1e-15 && v >= 0.0);
    }
}
