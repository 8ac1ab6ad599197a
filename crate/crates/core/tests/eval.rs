use chanboost::detect::{pascal_overlap, BoundingBox};
use chanboost::eval::*;
use proptest::prelude::*;

fn arb_box() -> impl Strategy<Value = BoundingBox> {
    (0.0f64..60.0, 0.0f64..60.0, 4.0f64..30.0, 4.0f64..30.0)
        .prop_map(|(x, y, w, h)| BoundingBox::from_xywh(x, y, w, h).unwrap())
}

fn arb_case() -> impl Strategy<Value = ImageCase> {
    (
        prop::collection::vec((arb_box(), 0.0f64..1.0), 0..12),
        prop::collection::vec(arb_box(), 1..6),
    )
        .prop_map(|(detections, gt)| ImageCase {
            detections,
            ground_truth: gt.into_iter().map(GroundTruth::new).collect(),
        })
}

fn arb_cases() -> impl Strategy<Value = Vec<ImageCase>> {
    prop::collection::vec(arb_case(), 1..5)
}

/// Greedy matching written out the slow way: every detection, strongest
/// first, claims the best still-free ground truth it overlaps enough.
fn brute_force_true_positives(case: &ImageCase, min_overlap: f64) -> usize {
    let mut dets = case.detections.clone();
    dets.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut free = vec![true; case.ground_truth.len()];
    let mut tp = 0;
    for (d, _) in &dets {
        let candidates = (0..free.len())
            .filter(|&j| free[j])
            .map(|j| (j, pascal_overlap(d, &case.ground_truth[j].bbox)));
        let best = candidates
            .filter(|&(_, o)| o >= min_overlap)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        if let Some((j, _)) = best {
            free[j] = false;
            tp += 1;
        }
    }
    tp
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn scores_are_bounded(cases in arb_cases(), overlap in 0.3f64..0.7) {
        for protocol in [MatchProtocol::Kitti, MatchProtocol::Gtsdb, MatchProtocol::Uiuc] {
            let e = evaluate_class("x", &cases, overlap, protocol).unwrap();
            prop_assert!((0.0..=1.0).contains(&e.ap));
            prop_assert!((0.0..=1.0).contains(&e.auc));
            prop_assert!(e.true_positives <= e.num_ground_truth);
            prop_assert!(e.true_positives + e.false_positives <= e.num_detections);
        }
    }

    #[test]
    fn monotone_score_transforms_change_nothing(cases in arb_cases(), gain in 0.1f64..10.0, shift in -3.0f64..3.0) {
        let warped: Vec<ImageCase> = cases
            .iter()
            .map(|c| ImageCase {
                detections: c.detections.iter().map(|&(b, s)| (b, (gain * s + shift).exp())).collect(),
                ground_truth: c.ground_truth.clone(),
            })
            .collect();
        let a = evaluate_class("x", &cases, 0.5, MatchProtocol::Kitti).unwrap();
        let b = evaluate_class("x", &warped, 0.5, MatchProtocol::Kitti).unwrap();
        prop_assert!((a.ap - b.ap).abs() < 1e-12);
        prop_assert!((a.auc - b.auc).abs() < 1e-12);
        prop_assert_eq!(a.true_positives, b.true_positives);
    }

    #[test]
    fn interpolated_precision_never_rises(cases in arb_cases()) {
        let curve = evaluate_class("x", &cases, 0.5, MatchProtocol::Kitti).unwrap().curve;
        let mut last = f64::INFINITY;
        for i in 0..=100 {
            let p = interpolated_precision(&curve, i as f64 / 100.0);
            prop_assert!(p <= last);
            last = p;
        }
        prop_assert!(curve.points.windows(2).all(|w| w[0].recall <= w[1].recall));
    }

    #[test]
    fn each_object_is_counted_once(cases in arb_cases(), overlap in 0.2f64..0.7) {
        let e = evaluate_class("x", &cases, overlap, MatchProtocol::Kitti).unwrap();
        let expected: usize = cases.iter().map(|c| brute_force_true_positives(c, overlap)).sum();
        prop_assert_eq!(e.true_positives, expected);
        let detections: usize = cases.iter().map(|c| c.detections.len()).sum();
        prop_assert_eq!(e.false_positives, detections - expected);
    }

    #[test]
    fn ground_truth_as_detections_is_perfect(gt in prop::collection::vec(arb_box(), 1..8)) {
        let case = ImageCase {
            detections: gt.iter().enumerate().map(|(i, &b)| (b, 1.0 - i as f64 * 0.01)).collect(),
            ground_truth: gt.iter().copied().map(GroundTruth::new).collect(),
        };
        for protocol in [MatchProtocol::Kitti, MatchProtocol::Gtsdb, MatchProtocol::Uiuc] {
            let e = evaluate_class("x", std::slice::from_ref(&case), 0.5, protocol).unwrap();
            prop_assert_eq!(e.ap, 1.0);
            prop_assert_eq!(e.auc, 1.0);
        }
    }
}

#[test]
fn eleven_point_interpolation() {
    let labeled = [
        (0.9, MatchLabel::TruePositive),
        (0.8, MatchLabel::FalsePositive),
        (0.7, MatchLabel::TruePositive),
    ];
    let curve = pr_curve(&labeled, 4).unwrap();
    // Precision 1 up to recall 0.25, then 2/3 up to recall 0.5, then nothing.
    let expected = (3.0 * 1.0 + 3.0 * (2.0 / 3.0)) / 11.0;
    assert!((average_precision(&curve, AP_LEVELS) - expected).abs() < 1e-12);
    let area = 0.25 * 1.0 + 0.25 * (2.0 / 3.0 + 0.5) / 2.0 + 0.0;
    assert!((auc(&curve) - area).abs() < 1e-12, "{}", auc(&curve));
}

#[test]
fn protocols_differ_on_duplicates() {
    let gt = [GroundTruth::new(
        BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap(),
    )];
    let dup = [gt[0].bbox, BoundingBox::new(0.5, 0.0, 10.5, 10.0).unwrap()];
    assert_eq!(
        match_detections(&dup, &gt, 0.5, MatchProtocol::Kitti),
        [MatchLabel::TruePositive, MatchLabel::FalsePositive]
    );
    assert_eq!(
        match_detections(&dup, &gt, 0.5, MatchProtocol::Gtsdb),
        [MatchLabel::TruePositive, MatchLabel::Ignored]
    );
    let ignored = [GroundTruth {
        ignored: true,
        ..gt[0]
    }];
    assert_eq!(
        match_detections(&dup[..1], &ignored, 0.5, MatchProtocol::Kitti),
        [MatchLabel::Ignored]
    );
}

#[test]
fn tolerance_matcher_bounds() {
    let g = BoundingBox::new(0.0, 0.0, 40.0, 20.0).unwrap();
    assert!(within_tolerance(
        &BoundingBox::new(10.0, 5.0, 50.0, 25.0).unwrap(),
        &g
    ));
    assert!(!within_tolerance(
        &BoundingBox::new(10.5, 0.0, 50.5, 20.0).unwrap(),
        &g
    ));
    assert!(!within_tolerance(
        &BoundingBox::new(0.0, 0.0, 51.0, 20.0).unwrap(),
        &g
    ));
}
