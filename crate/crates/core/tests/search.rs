mod common;

use cfood::index::ClassIndex;
use cfood::{Error, FeatureDataset, LinearHead};
use common::*;
use proptest::prelude::*;
use rand::Rng;

#[derive(Debug, Clone)]
struct Case {
    ds: FeatureDataset,
    head: LinearHead,
    filter: bool,
    queries: Vec<Vec<f64>>,
    k: usize,
}

prop_compose! {
    fn case()(seed in any::<u64>(), n in 1usize..120, d in 1usize..12, c in 2usize..6,
              grid in any::<bool>(), filter in any::<bool>(), k in 1usize..12) -> Case {
        let mut r = rng(seed);
        let ds = random_dataset(&mut r, n.max(c), d, c, grid);
        let head = random_head(&mut r, d, c);
        let queries = (0..8).map(|_| random_query(&mut r, d, grid, 1.5)).collect();
        Case { ds, head, filter, queries, k }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn queries_match_exhaustive_scan(case in case()) {
        let Case { ds, head, filter, queries, k } = case;
        let idx = ClassIndex::build(&ds, Some(&head), filter).unwrap();
        let ok = eligible(&ds, filter.then_some(&head));
        prop_assert_eq!(idx.len(), ok.iter().filter(|&&b| b).count());
        for z in &queries {
            let all = ranked_global(&ds, &ok, z);
            for c in 0..ds.classes() {
                let want = ranked_in_class(&ds, &ok, z, c);
                match idx.nearest_in_class(z, c) {
                    Ok(nn) => {
                        prop_assert_eq!((nn.sq_distance.to_bits(), nn.index), (want[0].0.to_bits(), want[0].1));
                    }
                    Err(Error::EmptyClass(e)) => {
                        prop_assert_eq!(e, c);
                        prop_assert!(want.is_empty());
                    }
                    Err(e) => prop_assert!(false, "unexpected {e}"),
                }
                if let Ok(list) = idx.k_nearest_in_class(z, c, k) {
                    let got: Vec<(u64, usize)> = list.iter().map(|n| (n.sq_distance.to_bits(), n.index)).collect();
                    let exp: Vec<(u64, usize)> = want.iter().take(k).map(|&(d, i)| (d.to_bits(), i)).collect();
                    prop_assert_eq!(&got, &exp);
                    prop_assert!(list.windows(2).all(|w| w[0].sq_distance <= w[1].sq_distance));
                    let one = idx.k_nearest_in_class(z, c, 1).unwrap();
                    prop_assert_eq!(one[0], idx.nearest_in_class(z, c).unwrap());
                }
            }
            if all.is_empty() {
                continue;
            }
            let kg = k.min(all.len());
            prop_assert_eq!(idx.kth_nearest_global(z, kg).unwrap().to_bits(), all[kg - 1].0.to_bits());
            let too_many = idx.kth_nearest_global(z, all.len() + 1);
            let rejected = matches!(too_many, Err(Error::KTooLarge { .. }));
            prop_assert!(rejected);
        }
    }

    #[test]
    fn build_is_independent_of_rebuilds(case in case()) {
        let a = ClassIndex::build(&case.ds, Some(&case.head), case.filter).unwrap();
        let b = ClassIndex::build(&case.ds, Some(&case.head), case.filter).unwrap();
        prop_assert_eq!(a.encode_cache(), b.encode_cache());
    }
}

#[test]
fn tie_goes_to_lower_index() {
    let ds = FeatureDataset::new(vec![0.0, 0.0, 2.0, 0.0, 9.0, 9.0], 2, vec![0, 0, 1], 2, None, None).unwrap();
    let idx = ClassIndex::build(&ds, None, false).unwrap();
    let nn = idx.nearest_in_class(&[1.0, 0.0], 0).unwrap();
    assert_eq!((nn.index, nn.sq_distance), (0, 1.0));
    assert_eq!(idx.k_nearest_in_class(&[1.0, 0.0], 0, 5).unwrap().len(), 2);
}

#[test]
fn collinear_middle_point_is_second() {
    let ds = FeatureDataset::new(vec![1.0, 0.0, 2.0, 0.0, 3.0, 0.0], 2, vec![0, 1, 0], 2, None, None).unwrap();
    let idx = ClassIndex::build(&ds, None, false).unwrap();
    assert_eq!(idx.kth_nearest_global(&[0.0, 0.0], 2).unwrap(), 4.0);
    assert_eq!(idx.kth_nearest_global(&[2.0, 0.0], 1).unwrap(), 0.0);
}

#[test]
fn filtering_drops_rows_the_head_gets_wrong() {
    // the head predicts class 1 iff x > 0
    let head = LinearHead::new(vec![-1.0, 1.0], vec![0.0, 0.0], 1).unwrap();
    let ds = FeatureDataset::new(vec![-2.0, -1.0, 1.0, -0.5], 1, vec![0, 0, 1, 1], 2, None, None).unwrap();
    let idx = ClassIndex::build(&ds, Some(&head), true).unwrap();
    assert_eq!(idx.len(), 3);
    assert_eq!(idx.class_indices(1), &[2]);
    assert_eq!(ClassIndex::build(&ds, Some(&head), false).unwrap().len(), 4);
    assert!(ClassIndex::build(&ds, None, true).is_err());
}

#[test]
fn empty_class_is_reported_not_fatal() {
    let head = LinearHead::new(vec![1.0, -1.0, 0.0], vec![0.0, 0.0, -100.0], 1).unwrap();
    let mut r = rng(3);
    let features: Vec<f32> = (0..30).map(|_| r.random_range(-1.0f32..1.0)).collect();
    let labels = (0..30).map(|i| i % 3).collect();
    let ds = FeatureDataset::new(features, 1, labels, 3, None, None).unwrap();
    let idx = ClassIndex::build(&ds, Some(&head), true).unwrap();
    assert_eq!(idx.empty_classes(), vec![2]);
    assert!(matches!(idx.nearest_in_class(&[0.0], 2), Err(Error::EmptyClass(2))));
}
