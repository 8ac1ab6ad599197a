use chanboost::boosting::*;
use chanboost::features::FeatureCombination;
use chanboost::pipeline::random_model;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noisy_problem(n: usize, cols: usize, noise: f64, seed: u64) -> (FeatureMatrix<f64>, Vec<i8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = FeatureMatrix::new(cols);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<f64> = (0..cols).map(|_| rng.random_range(0.0..1.0)).collect();
        let margin = row[0] + row[1 % cols] - 1.0 + rng.random_range(-noise..=noise);
        x.push_row(&row).unwrap();
        // Both labels are always present.
        labels.push(if i == 0 {
            1
        } else if i == 1 {
            -1
        } else if margin > 0.0 {
            1
        } else {
            -1
        });
    }
    (x, labels)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn weights_stay_a_positive_distribution(seed in any::<u64>(), depth in 1usize..=3, nu in 0.05f64..=1.0) {
        let (x, y) = noisy_problem(120, 5, 0.4, seed);
        let mut trainer = AdaBoostTrainer::new(&x, &y, BoostParams { rounds: 15, shrinkage: nu, depth }).unwrap();
        while let Some(round) = trainer.step() {
            let w = &trainer.state().weights;
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(w.iter().all(|&v| v > 0.0));
            prop_assert!(round.error < 0.5);
            prop_assert!(round.normalizer > 0.0);
        }
    }

    #[test]
    fn training_error_bounded_by_normalizer_product(seed in any::<u64>(), depth in 1usize..=3) {
        let (x, y) = noisy_problem(150, 4, 0.3, seed);
        let (ensemble, report) = adaboost_train(&x, &y, BoostParams { rounds: 20, shrinkage: 1.0, depth }).unwrap();
        let bound: f64 = report.rounds.iter().map(|r| r.normalizer).product();
        let wrong = (0..x.rows())
            .filter(|&i| f64::from(y[i]) * ensemble.score(x.row(i)) <= 0.0)
            .count();
        prop_assert!(wrong as f64 / x.rows() as f64 <= bound + 1e-12);
    }

    #[test]
    fn training_is_deterministic(seed in any::<u64>()) {
        let (x, y) = noisy_problem(80, 6, 0.5, seed);
        let params = BoostParams { rounds: 10, shrinkage: 0.3, depth: 2 };
        let a = adaboost_train(&x, &y, params).unwrap();
        let b = adaboost_train(&x, &y, params).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn cascade_never_rejects_a_positive(seed in any::<u64>()) {
        let (x, y) = noisy_problem(100, 4, 0.6, seed);
        let (mut ensemble, _) = adaboost_train(&x, &y, BoostParams { rounds: 12, shrinkage: 0.5, depth: 2 }).unwrap();
        let mut positives = FeatureMatrix::new(x.cols());
        for i in (0..x.rows()).filter(|&i| y[i] == 1) {
            positives.push_row(x.row(i)).unwrap();
        }
        fit_cascade(&mut ensemble, &positives).unwrap();
        for i in 0..positives.rows() {
            let outcome = ensemble.evaluate(positives.row(i));
            prop_assert_eq!(outcome, CascadeOutcome::Accepted(ensemble.score(positives.row(i))));
        }
        for i in 0..x.rows() {
            if let CascadeOutcome::Accepted(s) = ensemble.evaluate(x.row(i)) {
                let trace = ensemble.trace(x.row(i));
                prop_assert_eq!(s, *trace.last().unwrap());
                prop_assert!(trace.iter().zip(&ensemble.reject_thresholds).all(|(h, r)| h >= r));
            }
        }
    }

    #[test]
    fn reject_thresholds_sit_just_below_the_lowest_trace(traces in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 1..10)) {
        let r = compute_reject_thresholds(&traces).unwrap();
        for (t, &rt) in r.iter().enumerate() {
            let min = traces.iter().map(|tr| tr[t]).fold(f64::INFINITY, f64::min);
            prop_assert!((rt - (min - REJECT_SLACK)).abs() < 1e-12);
            prop_assert!(traces.iter().all(|tr| tr[t] >= rt));
        }
    }

    #[test]
    fn models_roundtrip_through_json(seed in any::<u64>(), trees in 1usize..12, depth in 1usize..=4) {
        let window = WindowGeometry::new(16, 24, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m64 = random_model::<f64>("car", window, FeatureCombination::AcfSpLbp, trees, depth, &mut rng).unwrap();
        let mut m32 = random_model::<f32>("car", window, FeatureCombination::Acf, trees, depth, &mut rng).unwrap();
        m64.ensemble.reject_thresholds[0] = -0.25;
        m32.ensemble.reject_thresholds[0] = 0.125;
        prop_assert_eq!(&BoostedModel::<f64>::from_json(&m64.to_json().unwrap()).unwrap(), &m64);
        prop_assert_eq!(&BoostedModel::<f32>::from_json(&m32.to_json().unwrap()).unwrap(), &m32);
    }
}

#[test]
fn separable_data_halts_on_a_perfect_learner() {
    let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i % 3) as f64]).collect();
    let labels: Vec<i8> = (0..40).map(|i| if i < 20 { -1 } else { 1 }).collect();
    let x = FeatureMatrix::from_rows(2, rows).unwrap();
    let (ensemble, report) = adaboost_train(
        &x,
        &labels,
        BoostParams {
            rounds: 50,
            shrinkage: 0.1,
            depth: 1,
        },
    )
    .unwrap();
    assert_eq!(report.stop, StopReason::PerfectLearner);
    assert_eq!(ensemble.len(), 1);
    let expected = 0.1 * weak_learner_weight(ZERO_ERROR_FLOOR);
    assert!((ensemble.coefficients[0] - expected).abs() < 1e-12);
}

#[test]
fn single_label_data_gives_one_leaf() {
    let x = FeatureMatrix::from_rows(1, vec![vec![0.0], vec![1.0]]).unwrap();
    let (ensemble, report) = adaboost_train(
        &x,
        &[1, 1],
        BoostParams {
            rounds: 5,
            shrinkage: 0.5,
            depth: 2,
        },
    )
    .unwrap();
    assert_eq!(report.stop, StopReason::SingleLabel);
    assert!(ensemble.trees[0].is_leaf());
}

#[test]
fn invalid_parameters_are_rejected() {
    let x = FeatureMatrix::from_rows(1, vec![vec![0.0], vec![1.0]]).unwrap();
    for params in [
        BoostParams {
            rounds: 0,
            shrinkage: 0.5,
            depth: 2,
        },
        BoostParams {
            rounds: 3,
            shrinkage: 0.0,
            depth: 2,
        },
        BoostParams {
            rounds: 3,
            shrinkage: 1.5,
            depth: 2,
        },
        BoostParams {
            rounds: 3,
            shrinkage: 0.5,
            depth: 0,
        },
        BoostParams {
            rounds: 3,
            shrinkage: 0.5,
            depth: 6,
        },
    ] {
        assert!(adaboost_train(&x, &[1, -1], params).is_err());
    }
}
