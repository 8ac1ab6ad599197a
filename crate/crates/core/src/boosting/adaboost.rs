use serde::{Deserialize, Serialize};

use super::model::Ensemble;
use super::tree::{check_labels, fit_tree, QuantizedFeatures, MAX_DEPTH};
use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Error used in place of an exact zero so the coefficient stays finite.
pub const ZERO_ERROR_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub rounds: usize,
    pub shrinkage: f64,
    pub depth: usize,
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::invalid("boosting needs at least one round"));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::invalid(format!(
                "shrinkage {} outside (0, 1]",
                self.shrinkage
            )));
        }
        if !(1..=MAX_DEPTH).contains(&self.depth) {
            return Err(Error::invalid(format!(
                "tree depth {} outside 1..=5",
                self.depth
            )));
        }
        Ok(())
    }
}

/// `w = 1/2 ln((1 - e) / e)`.
pub fn weak_learner_weight(error: f64) -> f64 {
    0.5 * ((1.0 - error) / error).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    pub error: f64,
    pub weight: f64,
    pub coefficient: f64,
    pub normalizer: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    /// The last learner classified every sample; its error was floored.
    PerfectLearner,
    /// The candidate learner was no better than chance and was discarded.
    NoBetterThanChance {
        error: f64,
    },
    /// Only one label present; the model is a single leaf.
    SingleLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub rounds: Vec<RoundSummary>,
    pub stop: StopReason,
}

/// Sample distribution and bookkeeping between rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    pub weights: Vec<f64>,
    pub round: usize,
    pub last_error: Option<f64>,
    pub last_normalizer: Option<f64>,
}

/// Round-by-round shrinkage AdaBoost.
pub struct AdaBoostTrainer<'a, T> {
    features: &'a FeatureMatrix<T>,
    labels: &'a [i8],
    quantized: QuantizedFeatures<T>,
    params: BoostParams,
    state: TrainingState,
    ensemble: Ensemble<T>,
    rounds: Vec<RoundSummary>,
    stop: Option<StopReason>,
}

impl<'a, T: Real> AdaBoostTrainer<'a, T> {
    pub fn new(
        features: &'a FeatureMatrix<T>,
        labels: &'a [i8],
        params: BoostParams,
    ) -> Result<Self> {
        params.validate()?;
        let n = features.rows();
        if n == 0 {
            return Err(Error::invalid("no training samples"));
        }
        check_labels(labels, n)?;
        if !features.is_finite() {
            return Err(Error::invalid("non-finite feature value"));
        }
        Ok(AdaBoostTrainer {
            features,
            labels,
            quantized: QuantizedFeatures::fit(features),
            params,
            state: TrainingState {
                weights: vec![1.0 / n as f64; n],
                round: 0,
                last_error: None,
                last_normalizer: None,
            },
            ensemble: Ensemble::new(),
            rounds: Vec::new(),
            stop: None,
        })
    }

    pub fn state(&self) -> &TrainingState {
        &self.state
    }

    pub fn ensemble(&self) -> &Ensemble<T> {
        &self.ensemble
    }

    pub fn is_finished(&self) -> bool {
        self.stop.is_some()
    }

    /// Runs one round; `None` once training has stopped.
    pub fn step(&mut self) -> Option<RoundSummary> {
        if self.stop.is_some() {
            return None;
        }
        if self.state.round >= self.params.rounds {
            self.stop = Some(StopReason::Completed);
            return None;
        }
        let tree = fit_tree(
            &self.quantized,
            self.labels,
            &self.state.weights,
            self.params.depth,
        );
        if tree.is_leaf() {
            // Single-label data: the leaf is always right.
            self.ensemble.push(tree, T::one());
            self.stop = Some(StopReason::SingleLabel);
            return None;
        }
        let predictions: Vec<i8> = (0..self.features.rows())
            .map(|i| tree.predict(self.features.row(i)))
            .collect();
        let mut error = 0.0;
        for ((&p, &y), &w) in predictions.iter().zip(self.labels).zip(&self.state.weights) {
            if p != y {
                error += w;
            }
        }
        if error >= 0.5 {
            self.stop = Some(StopReason::NoBetterThanChance { error });
            return None;
        }
        let perfect = error <= 0.0;
        let effective = error.max(ZERO_ERROR_FLOOR);
        let weight = weak_learner_weight(effective);
        let coefficient = self.params.shrinkage * weight;

        let mut normalizer = 0.0;
        for ((w, &p), &y) in self
            .state
            .weights
            .iter_mut()
            .zip(&predictions)
            .zip(self.labels)
        {
            *w *= (-coefficient * f64::from(y) * f64::from(p)).exp();
            normalizer += *w;
        }
        for w in &mut self.state.weights {
            *w /= normalizer;
        }

        self.ensemble.push(tree, T::lit(coefficient));
        self.state.round += 1;
        self.state.last_error = Some(error);
        self.state.last_normalizer = Some(normalizer);
        let summary = RoundSummary {
            round: self.state.round,
            error,
            weight,
            coefficient,
            normalizer,
        };
        self.rounds.push(summary);
        if perfect {
            self.stop = Some(StopReason::PerfectLearner);
        } else if self.state.round >= self.params.rounds {
            self.stop = Some(StopReason::Completed);
        }
        Some(summary)
    }

    pub fn run(mut self) -> (Ensemble<T>, TrainingReport) {
        while self.step().is_some() {}
        self.finish()
    }

    pub fn finish(self) -> (Ensemble<T>, TrainingReport) {
        let stop = self.stop.unwrap_or(StopReason::Completed);
        match stop {
            StopReason::NoBetterThanChance { error } => log::warn!(
                "boosting stopped after {} rounds: weak learner error {error:.6} >= 0.5",
                self.rounds.len()
            ),
            StopReason::PerfectLearner => log::info!(
                "boosting stopped after {} rounds: training set separated",
                self.rounds.len()
            ),
            StopReason::SingleLabel => log::warn!("boosting on single-label data"),
            StopReason::Completed => {}
        }
        (
            self.ensemble,
            TrainingReport {
                rounds: self.rounds,
                stop,
            },
        )
    }
}

/// Trains up to `params.rounds` trees; the ensemble carries no reject thresholds.
pub fn adaboost_train<T: Real>(
    features: &FeatureMatrix<T>,
    labels: &[i8],
    params: BoostParams,
) -> Result<(Ensemble<T>, TrainingReport)> {
    Ok(AdaBoostTrainer::new(features, labels, params)?.run())
}
