mod common;

use cfood::{auroc, classify, detection_metrics, fpr_at_95_tpr, Verdict};
use common::{pairwise_auroc, sweep_fpr95};
use proptest::prelude::*;

fn scores(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![(-20i32..20).prop_map(|v| v as f64 / 4.0), -5.0f64..5.0], 1..max_len)
}

fn distinct(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::hash_set(-1_000_000i64..1_000_000, 1..max_len)
        .prop_map(|s| s.into_iter().map(|v| v as f64 / 1000.0).collect())
}

proptest! {
    #[test]
    fn auroc_equals_pairwise_oracle(id in scores(300), ood in scores(300)) {
        prop_assert_eq!(auroc(&id, &ood).unwrap(), pairwise_auroc(&id, &ood));
    }

    #[test]
    fn fpr95_equals_sweep_oracle(id in scores(300), ood in scores(300)) {
        prop_assert_eq!(fpr_at_95_tpr(&id, &ood).unwrap(), sweep_fpr95(&id, &ood));
    }

    #[test]
    fn tau_is_the_last_threshold_keeping_95_percent(id in scores(300), ood in scores(50)) {
        let (_, tau) = fpr_at_95_tpr(&id, &ood).unwrap();
        let n = id.len();
        let tpr = |t: f64| id.iter().filter(|&&s| s >= t).count();
        prop_assert!(100 * tpr(tau) >= 95 * n);
        if let Some(next) = id.iter().copied().filter(|&s| s > tau).min_by(f64::total_cmp) {
            prop_assert!(100 * tpr(next) < 95 * n);
        }
    }

    #[test]
    fn auroc_ignores_monotone_transforms(id in scores(200), ood in scores(200)) {
        let f = |v: &Vec<f64>| v.iter().map(|x| (x / 3.0).exp() * 2.0 + 7.0).collect::<Vec<_>>();
        prop_assert_eq!(auroc(&id, &ood).unwrap(), auroc(&f(&id), &f(&ood)).unwrap());
    }

    #[test]
    fn swapping_sides_complements_auroc(mut all in distinct(400), cut in any::<prop::sample::Index>()) {
        prop_assume!(all.len() >= 2);
        let at = 1 + cut.index(all.len() - 1);
        let ood = all.split_off(at);
        let a = auroc(&all, &ood).unwrap();
        let b = auroc(&ood, &all).unwrap();
        prop_assert!((a + b - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn raising_tau_never_accepts_more(score in -10.0f64..10.0, tau in -10.0f64..10.0, up in 0.0f64..5.0) {
        if classify(score, tau + up) == Verdict::Id {
            prop_assert_eq!(classify(score, tau), Verdict::Id);
        }
    }
}

#[test]
fn hand_examples() {
    assert_eq!(auroc(&[3.0, 4.0, 5.0], &[1.0, 2.0]).unwrap(), 1.0);
    assert_eq!(auroc(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.5);
    assert_eq!(auroc(&[2.0], &[1.0, 3.0]).unwrap(), 0.5);

    let id: Vec<f64> = (1..=100).map(f64::from).collect();
    assert_eq!(fpr_at_95_tpr(&id, &[5.5, 6.0, 7.0, 100.0]).unwrap(), (0.75, 6.0));
    assert_eq!(fpr_at_95_tpr(&id, &[-1.0, 0.0]).unwrap().0, 0.0);
    assert!(fpr_at_95_tpr(&id, &id).unwrap().0 >= 0.95);

    assert_eq!(classify(1.0, 1.0), Verdict::Id);
    assert_eq!(classify(1.0 - f64::EPSILON, 1.0), Verdict::Ood);

    assert!(auroc(&[], &[1.0]).is_err());
    assert!(fpr_at_95_tpr(&[1.0], &[]).is_err());
    assert!(auroc(&[f64::NAN], &[1.0]).is_err());

    let m = detection_metrics(&id, &[5.5, 6.0, 7.0, 100.0]).unwrap();
    assert_eq!((m.id_count, m.ood_count, m.threshold_tau), (100, 4, 6.0));
}
