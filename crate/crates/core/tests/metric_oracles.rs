mod common;

use common::*;
use proptest::prelude::*;
use stan_core::metrics::{
    boundary_errors, boundary_points, evaluate_masks, image_metrics, is_small, longest_axis, region_metrics, BinaryMask,
    EvalOptions,
};
use stan_core::Error;

fn mask(w: usize, h: usize) -> impl Strategy<Value = BinaryMask> {
    (proptest::collection::vec(any::<bool>(), w * h), 0usize..w * h).prop_map(move |(mut bits, seed)| {
        bits[seed] = true;
        BinaryMask::new(w, h, bits).unwrap()
    })
}

/// A filled blob: union of a few random discs. Gives masks with interior.
fn blobby(size: usize) -> impl Strategy<Value = BinaryMask> {
    proptest::collection::vec((0..size, 0..size, 1usize..6), 1..4).prop_map(move |discs| {
        BinaryMask::from_fn(size, size, |x, y| {
            discs.iter().any(|&(cx, cy, r)| {
                let (dx, dy) = (x as i64 - cx as i64, y as i64 - cy as i64);
                dx * dx + dy * dy <= (r * r) as i64
            })
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn area_metrics_equal_pixel_counting(a in mask(16, 16), g in mask(16, 16)) {
        let m = region_metrics(&a, &g).unwrap();
        let b = brute_region(&a, &g);
        prop_assert_eq!((m.tpr, m.fpr, m.ji, m.dsc, m.aer), (b.tpr, b.fpr, b.ji, b.dsc, b.aer));
    }

    #[test]
    fn boundary_errors_equal_all_pairs(a in mask(16, 16), g in mask(16, 16)) {
        let e = boundary_errors(&a, &g).unwrap();
        let (he, mae) = brute_he_mae(&a, &g);
        prop_assert_eq!((e.he, e.mae), (he, mae));
    }

    #[test]
    fn boundary_errors_on_blobs(a in blobby(24), g in blobby(24)) {
        let e = boundary_errors(&a, &g).unwrap();
        prop_assert_eq!((e.he, e.mae), brute_he_mae(&a, &g));
    }

    #[test]
    fn boundary_points_match_the_definition(m in blobby(20)) {
        let got: Vec<(f64, f64)> = boundary_points(&m).unwrap().into_iter().map(|(x, y)| (x as f64, y as f64)).collect();
        prop_assert_eq!(got, brute_boundary(&m));
    }

    #[test]
    fn identities_hold(a in mask(12, 10), g in mask(12, 10)) {
        let m = region_metrics(&a, &g).unwrap();
        prop_assert!((m.aer - (m.fpr + 1.0 - m.tpr)).abs() <= 1e-12);
        prop_assert!((m.dsc - 2.0 * m.ji / (1.0 + m.ji)).abs() <= 1e-12);
        prop_assert!(m.ji <= m.dsc + 1e-15);
    }

    #[test]
    fn boundary_errors_are_symmetric(a in mask(14, 14), g in mask(14, 14)) {
        let ag = boundary_errors(&a, &g).unwrap();
        let ga = boundary_errors(&g, &a).unwrap();
        prop_assert_eq!(ag.he, ga.he);
        prop_assert!((ag.mae - ga.mae).abs() <= 1e-12);
        prop_assert!(ag.mae <= ag.he);
    }

    #[test]
    fn longest_axis_equals_brute_force(m in mask(20, 17)) {
        prop_assert_eq!(longest_axis(&m).unwrap(), brute_longest_axis(&m));
    }

    #[test]
    fn small_means_at_most_threshold(m in blobby(32), t in 0.0f64..40.0) {
        prop_assert_eq!(is_small(&m, t).unwrap(), brute_longest_axis(&m) <= t);
    }
}

#[test]
fn hundred_random_pairs_are_exact() {
    let mut r = rng(4);
    let mut n = 0;
    while n < 100 {
        let a = random_mask(16, 16, 0.3, &mut r);
        let g = random_mask(16, 16, 0.3, &mut r);
        if a.is_empty() || g.is_empty() {
            continue;
        }
        let m = region_metrics(&a, &g).unwrap();
        let b = brute_region(&a, &g);
        assert_eq!((m.tpr, m.fpr, m.ji, m.dsc, m.aer), (b.tpr, b.fpr, b.ji, b.dsc, b.aer));
        let e = boundary_errors(&a, &g).unwrap();
        assert_eq!((e.he, e.mae), brute_he_mae(&a, &g));
        n += 1;
    }
}

#[test]
fn perfect_and_disjoint_predictions() {
    let g = BinaryMask::from_fn(10, 10, |x, y| (2..6).contains(&x) && (3..7).contains(&y));
    let m = region_metrics(&g, &g).unwrap();
    assert_eq!((m.tpr, m.fpr, m.ji, m.dsc, m.aer), (1.0, 0.0, 1.0, 1.0, 0.0));
    let e = boundary_errors(&g, &g).unwrap();
    assert_eq!((e.he, e.mae), (0.0, 0.0));

    let a = BinaryMask::from_fn(10, 10, |x, y| (7..9).contains(&x) && (3..5).contains(&y));
    let m = region_metrics(&a, &g).unwrap();
    assert_eq!((m.tpr, m.fpr, m.ji, m.dsc), (0.0, 0.25, 0.0, 0.0));
    assert_eq!(m.aer, 1.25);
}

#[test]
fn empty_prediction_gets_the_diagonal_sentinel() {
    let g = BinaryMask::from_fn(30, 40, |x, y| (5..9).contains(&x) && (5..9).contains(&y));
    let m = image_metrics(&BinaryMask::empty(30, 40), &g, 120.0).unwrap();
    assert!(m.empty_prediction);
    assert_eq!((m.tpr, m.fpr, m.ji, m.dsc, m.aer), (0.0, 0.0, 0.0, 0.0, 1.0));
    assert_eq!(m.he, 50.0);
    assert_eq!(m.mae, 50.0);
}

#[test]
fn empty_truth_is_excluded_from_reports() {
    let g = BinaryMask::from_fn(8, 8, |x, _| x < 3);
    assert!(matches!(image_metrics(&g, &BinaryMask::empty(8, 8), 120.0), Err(Error::EmptyGroundTruth)));
    let items = vec![("a".to_string(), g.clone(), g.clone()), ("b".to_string(), g.clone(), BinaryMask::empty(8, 8))];
    let r = evaluate_masks(&items, EvalOptions::default()).unwrap();
    assert_eq!(r.rows.len(), 1);
    assert_eq!(r.excluded, vec!["b".to_string()]);
}

#[test]
fn longest_axis_of_simple_shapes() {
    let bar = BinaryMask::from_fn(20, 5, |x, y| y == 2 && (3..=13).contains(&x));
    assert_eq!(longest_axis(&bar).unwrap(), 10.0);
    let square = BinaryMask::from_fn(10, 10, |x, y| (1..=4).contains(&x) && (1..=4).contains(&y));
    assert_eq!(longest_axis(&square).unwrap(), (18.0f64).sqrt());
    assert!(is_small(&bar, 10.0).unwrap());
    assert!(!is_small(&bar, 9.999).unwrap());
}
