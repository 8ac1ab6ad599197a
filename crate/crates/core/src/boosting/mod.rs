//! Decision-tree weak learners, shrinkage AdaBoost, soft-cascade rejection
//! and bootstrapped hard-negative training.

mod adaboost;
mod bootstrap;
mod cascade;
mod model;
mod tree;

pub use adaboost::{
    adaboost_train, weak_learner_weight, AdaBoostTrainer, BoostParams, RoundSummary, StopReason,
    TrainingReport, TrainingState, ZERO_ERROR_FLOOR,
};
pub use bootstrap::{
    bootstrap_train, fit_cascade, BootstrapOutput, BootstrapParams, BootstrapRound, HardNegative,
    NegativeSource, DEFAULT_HARD_NEGATIVE_CAP, DEFAULT_SCHEDULE,
};
pub use cascade::{compute_reject_thresholds, CascadeOutcome, REJECT_SLACK};
pub use model::{BoostedModel, Ensemble, WindowGeometry, MODEL_FORMAT, MODEL_VERSION};
pub use tree::{train_tree, DecisionTree, QuantizedFeatures, MAX_DEPTH, QUANT_BINS};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Read access to one sample's feature vector.
pub trait FeatureAccess<T> {
    fn feature(&self, index: usize) -> T;
    fn num_features(&self) -> usize;
}

impl<T: Copy> FeatureAccess<T> for [T] {
    #[inline]
    fn feature(&self, index: usize) -> T {
        self[index]
    }

    fn num_features(&self) -> usize {
        self.len()
    }
}

impl<T: Copy> FeatureAccess<T> for Vec<T> {
    #[inline]
    fn feature(&self, index: usize) -> T {
        self[index]
    }

    fn num_features(&self) -> usize {
        self.len()
    }
}

/// A window inside a flat channel buffer, read through precomputed offsets.
pub struct OffsetWindow<'a, T> {
    pub data: &'a [T],
    pub base: usize,
    pub offsets: &'a [usize],
}

impl<T: Copy> FeatureAccess<T> for OffsetWindow<'_, T> {
    #[inline]
    fn feature(&self, index: usize) -> T {
        self.data[self.base + self.offsets[index]]
    }

    fn num_features(&self) -> usize {
        self.offsets.len()
    }
}

/// Row-major samples x features matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> FeatureMatrix<T> {
    pub fn new(cols: usize) -> Self {
        FeatureMatrix {
            cols,
            data: Vec::new(),
        }
    }

    pub fn from_rows(cols: usize, rows: impl IntoIterator<Item = Vec<T>>) -> Result<Self> {
        let mut m = Self::new(cols);
        for r in rows {
            m.push_row(&r)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[T]) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::invalid(format!(
                "feature row has {} values, expected {}",
                row.len(),
                self.cols
            )));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn extend(&mut self, other: &FeatureMatrix<T>) -> Result<()> {
        if other.cols != self.cols {
            return Err(Error::invalid("feature matrices differ in width"));
        }
        self.data.extend_from_slice(&other.data);
        Ok(())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        if self.cols == 0 {
            0
        } else {
            self.data.len() / self.cols
        }
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, f: usize) -> T {
        self.data[i * self.cols + f]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
