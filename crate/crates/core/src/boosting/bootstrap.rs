use serde::{Deserialize, Serialize};

use super::adaboost::{adaboost_train, BoostParams, TrainingReport};
use super::cascade::compute_reject_thresholds;
use super::model::Ensemble;
use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DEFAULT_SCHEDULE: [usize; 4] = [64, 256, 1024, 2048];
pub const DEFAULT_HARD_NEGATIVE_CAP: usize = 10_000;

/// A negative window that survived the cascade, with its full score.
#[derive(Debug, Clone, PartialEq)]
pub struct HardNegative<T> {
    pub features: Vec<T>,
    pub score: T,
}

/// Supplies negatives for bootstrapped training.
pub trait NegativeSource<T: Real> {
    /// Random negatives for the first round.
    fn initial_negatives(&mut self) -> Result<FeatureMatrix<T>>;

    /// Up to `cap` highest-scoring false positives of `model`, each one
    /// accepted by its cascade.
    fn harvest(&mut self, model: &Ensemble<T>, cap: usize) -> Result<Vec<HardNegative<T>>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapParams {
    pub schedule: Vec<usize>,
    pub shrinkage: f64,
    pub depth: usize,
    pub hard_negative_cap: usize,
}

impl Default for BootstrapParams {
    fn default() -> Self {
        BootstrapParams {
            schedule: DEFAULT_SCHEDULE.to_vec(),
            shrinkage: 0.1,
            depth: 3,
            hard_negative_cap: DEFAULT_HARD_NEGATIVE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRound {
    pub learners: usize,
    pub positives: usize,
    pub negatives: usize,
    /// Hard negatives gathered with this round's model (absent for the last round).
    pub harvested: Option<usize>,
    pub report: TrainingReport,
}

#[derive(Debug, Clone)]
pub struct BootstrapOutput<T> {
    /// Final ensemble with reject thresholds fitted on the positives.
    pub ensemble: Ensemble<T>,
    pub rounds: Vec<BootstrapRound>,
    /// Every harvested hard negative, in harvest order.
    pub hard_negatives: FeatureMatrix<T>,
    /// Final negative pool (initial plus harvested).
    pub negatives: FeatureMatrix<T>,
}

/// Fits reject thresholds so that no row of `positives` is rejected.
pub fn fit_cascade<T: Real>(
    ensemble: &mut Ensemble<T>,
    positives: &FeatureMatrix<T>,
) -> Result<()> {
    if ensemble.is_empty() {
        return Ok(());
    }
    let traces: Vec<Vec<T>> = (0..positives.rows())
        .map(|i| ensemble.trace(positives.row(i)))
        .collect();
    let thresholds = compute_reject_thresholds(&traces)?;
    ensemble.set_thresholds(thresholds)
}

fn train_round<T: Real>(
    positives: &FeatureMatrix<T>,
    negatives: &FeatureMatrix<T>,
    rounds: usize,
    params: &BootstrapParams,
) -> Result<(Ensemble<T>, TrainingReport)> {
    let mut x = positives.clone();
    x.extend(negatives)?;
    let mut labels = vec![1i8; positives.rows()];
    labels.extend(std::iter::repeat_n(-1i8, negatives.rows()));
    let (mut ensemble, report) = adaboost_train(
        &x,
        &labels,
        BoostParams {
            rounds,
            shrinkage: params.shrinkage,
            depth: params.depth,
        },
    )?;
    fit_cascade(&mut ensemble, positives)?;
    Ok((ensemble, report))
}

/// Trains from scratch at each schedule entry, growing the negative pool
/// with hard negatives harvested by the previous round's cascade.
pub fn bootstrap_train<T: Real>(
    positives: &FeatureMatrix<T>,
    source: &mut dyn NegativeSource<T>,
    params: &BootstrapParams,
) -> Result<BootstrapOutput<T>> {
    if params.schedule.is_empty() || params.schedule.contains(&0) {
        return Err(Error::invalid(
            "bootstrap schedule needs positive round counts",
        ));
    }
    if positives.rows() == 0 {
        return Err(Error::invalid("no positive samples"));
    }
    let mut negatives = source.initial_negatives()?;
    if negatives.cols() != positives.cols() {
        return Err(Error::invalid(
            "negative and positive feature widths differ",
        ));
    }
    if negatives.rows() == 0 {
        return Err(Error::invalid("no negative samples"));
    }
    let mut hard = FeatureMatrix::new(positives.cols());
    let mut rounds = Vec::with_capacity(params.schedule.len());
    let last = params.schedule.len() - 1;
    let mut ensemble = Ensemble::new();
    for (k, &learners) in params.schedule.iter().enumerate() {
        let (model, report) = train_round(positives, &negatives, learners, params)?;
        let mut round = BootstrapRound {
            learners,
            positives: positives.rows(),
            negatives: negatives.rows(),
            harvested: None,
            report,
        };
        if k < last {
            let found = source.harvest(&model, params.hard_negative_cap)?;
            if found.is_empty() {
                log::warn!(
                    "bootstrap round {}: no hard negatives found, keeping the pool",
                    k + 1
                );
            }
            for h in &found {
                hard.push_row(&h.features)?;
                negatives.push_row(&h.features)?;
            }
            round.harvested = Some(found.len());
        }
        log::info!(
            "bootstrap round {}: {} learners trained on {} pos / {} neg",
            k + 1,
            model.len(),
            round.positives,
            round.negatives
        );
        rounds.push(round);
        ensemble = model;
    }
    Ok(BootstrapOutput {
        ensemble,
        rounds,
        hard_negatives: hard,
        negatives,
    })
}
