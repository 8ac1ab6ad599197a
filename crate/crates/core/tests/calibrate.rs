use chanboost::calibrate::*;
use proptest::prelude::*;

fn scored(pos: &[f64], neg: &[f64]) -> (Vec<f64>, Vec<i8>) {
    let scores = pos.iter().chain(neg).copied().collect();
    let labels = pos
        .iter()
        .map(|_| 1)
        .chain(neg.iter().map(|_| -1))
        .collect();
    (scores, labels)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn calibrated_scores_stay_open_unit(a in -100.0f64..100.0, b in -1e4f64..1e4, s in -100.0f64..100.0) {
        let g = CalibrationParams { a, b }.calibrate(s);
        prop_assert!(g > 0.0 && g < 1.0);
        let g32 = CalibrationParams { a: a as f32, b: b as f32 }.calibrate(s as f32);
        prop_assert!(g32 > 0.0 && g32 < 1.0);
    }

    #[test]
    fn softplus_is_finite_and_exact(z in -1e4f64..1e4) {
        let v = log1p_exp(z);
        prop_assert!(v.is_finite() && v >= 0.0 && v >= z);
        if z.abs() < 30.0 {
            prop_assert!((v - z.exp().ln_1p()).abs() <= 1e-12 * v.max(1e-300));
        }
    }

    #[test]
    fn newton_never_increases_the_objective(
        pos in prop::collection::vec(-2.0f64..4.0, 1..40),
        neg in prop::collection::vec(-4.0f64..2.0, 1..40),
    ) {
        let (scores, labels) = scored(&pos, &neg);
        let fit = fit_platt(&scores, &labels).unwrap();
        prop_assert!(!fit.objectives.is_empty());
        for pair in fit.objectives.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-12 * pair[0].abs().max(1.0));
        }
        prop_assert_eq!(*fit.objectives.last().unwrap(), fit.objective);
        prop_assert!(fit.params.a.is_finite() && fit.params.b.is_finite());
    }

    #[test]
    fn increasing_calibration_preserves_ranking(
        pos in prop::collection::vec(0.0f64..4.0, 2..30),
        neg in prop::collection::vec(-4.0f64..1.0, 2..30),
        probe in prop::collection::vec(-5.0f64..5.0, 2..20),
    ) {
        let (scores, labels) = scored(&pos, &neg);
        let fit = fit_platt(&scores, &labels).unwrap();
        prop_assert!(fit.params.is_increasing());
        for x in &probe {
            for y in &probe {
                if x < y {
                    prop_assert!(fit.params.calibrate(*x) <= fit.params.calibrate(*y));
                }
            }
        }
    }
}

#[test]
fn mismatched_or_single_label_input_is_rejected() {
    assert!(fit_platt(&[0.1, 0.2], &[1]).is_err());
    assert!(fit_platt(&[0.1, 0.2], &[1, 1]).is_err());
    assert!(fit_platt(&[f64::NAN, 0.2], &[1, -1]).is_err());
}

#[test]
fn smoothed_targets() {
    let t = CalibrationTargets::from_labels(&[1, 1, 1, -1, -1]).unwrap();
    assert!((t.positive - 4.0 / 5.0).abs() < 1e-15);
    assert!((t.negative - 1.0 / 4.0).abs() < 1e-15);
}

#[test]
fn fit_reaches_a_stationary_point() {
    let (scores, labels) = scored(&[1.0, 2.0, 0.5, -0.2], &[-1.0, 0.3, -2.0, -0.7]);
    let fit = fit_platt(&scores, &labels).unwrap();
    assert!(fit.converged);
    let targets: Vec<f64> = labels.iter().map(|&l| fit.targets.target(l)).collect();
    let h = 1e-6;
    let (a, b) = (fit.params.a, fit.params.b);
    let da = (platt_objective(a + h, b, &scores, &targets)
        - platt_objective(a - h, b, &scores, &targets))
        / (2.0 * h);
    let db = (platt_objective(a, b + h, &scores, &targets)
        - platt_objective(a, b - h, &scores, &targets))
        / (2.0 * h);
    assert!(da.abs() < 1e-6 && db.abs() < 1e-6, "gradient ({da}, {db})");
}
