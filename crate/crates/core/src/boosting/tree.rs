use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureAccess, FeatureMatrix};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Quantization levels per feature for split search.
pub const QUANT_BINS: usize = 256;
pub const MAX_DEPTH: usize = 5;

/// Complete binary decision tree stored in heap order.
///
/// Internal node `i` sends a sample to child `2i+1` when
/// `x[feature] < threshold` and to `2i+2` otherwise. A depth-0 tree is a
/// single leaf (produced only for single-label data).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree<T> {
    pub depth: usize,
    pub features: Vec<u32>,
    pub thresholds: Vec<T>,
    pub votes: Vec<i8>,
}

impl<T: Real> DecisionTree<T> {
    pub fn leaf(vote: i8) -> Self {
        DecisionTree {
            depth: 0,
            features: Vec::new(),
            thresholds: Vec::new(),
            votes: vec![vote],
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.depth == 0
    }

    #[inline]
    pub fn predict<X: FeatureAccess<T> + ?Sized>(&self, x: &X) -> i8 {
        let mut node = 0usize;
        for _ in 0..self.depth {
            let go_right = x.feature(self.features[node] as usize) >= self.thresholds[node];
            node = 2 * node + 1 + usize::from(go_right);
        }
        self.votes[node - self.features.len()]
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.features.iter().map(|&f| f as usize).max()
    }

    pub fn validate(&self, num_features: usize) -> Result<()> {
        let internal = (1usize << self.depth) - 1;
        if self.depth > MAX_DEPTH
            || self.features.len() != internal
            || self.thresholds.len() != internal
            || self.votes.len() != internal + 1
        {
            return Err(Error::Format(format!(
                "tree arrays do not form a complete depth-{} tree",
                self.depth
            )));
        }
        if self.votes.iter().any(|&v| v != 1 && v != -1) {
            return Err(Error::Format("tree votes must be +1 or -1".into()));
        }
        if self.max_feature().is_some_and(|f| f >= num_features) {
            return Err(Error::Format(format!(
                "tree reads a feature beyond the {num_features}-feature layout"
            )));
        }
        Ok(())
    }
}

/// Column-major 8-bit codes of a feature matrix plus the real-valued bin edges.
///
/// `code(x) = #{k : edge_k <= x}`, so `code(x) <= b` holds exactly when
/// `x < edge_b`; trained thresholds therefore reproduce the quantized split
/// on raw values.
#[derive(Debug, Clone)]
pub struct QuantizedFeatures<T> {
    rows: usize,
    codes: Vec<u8>,
    edges: Vec<Vec<T>>,
}

impl<T: Real> QuantizedFeatures<T> {
    /// Fits per-feature min/max edges on `features` and encodes every value.
    pub fn fit(features: &FeatureMatrix<T>) -> Self {
        let rows = features.rows();
        let cols = features.cols();
        let per_feature: Vec<(Vec<T>, Vec<u8>)> = (0..cols)
            .into_par_iter()
            .map(|f| {
                let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
                for i in 0..rows {
                    let v = features.get(i, f);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                if rows == 0 || !(hi > lo) {
                    return (Vec::new(), vec![0u8; rows]);
                }
                let step = (hi - lo) / T::from_usize_lossy(QUANT_BINS);
                let mut edges: Vec<T> = (1..QUANT_BINS)
                    .map(|k| lo + step * T::from_usize_lossy(k))
                    .collect();
                // Guard monotonicity under rounding.
                for k in 1..edges.len() {
                    if edges[k] < edges[k - 1] {
                        edges[k] = edges[k - 1];
                    }
                }
                let codes = (0..rows)
                    .map(|i| {
                        let v = features.get(i, f);
                        edges.partition_point(|&e| e <= v) as u8
                    })
                    .collect();
                (edges, codes)
            })
            .collect();
        let mut codes = Vec::with_capacity(rows * cols);
        let mut edges = Vec::with_capacity(cols);
        for (e, c) in per_feature {
            edges.push(e);
            codes.extend(c);
        }
        QuantizedFeatures { rows, codes, edges }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.edges.len()
    }

    #[inline]
    fn column(&self, f: usize) -> &[u8] {
        &self.codes[f * self.rows..(f + 1) * self.rows]
    }
}

#[derive(Debug, Clone, Copy)]
struct Split {
    error: f64,
    feature: usize,
    bin: usize,
}

fn best_split<T: Real>(
    q: &QuantizedFeatures<T>,
    labels: &[i8],
    weights: &[f64],
    samples: &[usize],
) -> Option<Split> {
    let candidates: Vec<Option<Split>> = (0..q.cols())
        .into_par_iter()
        .map(|f| {
            let n_edges = q.edges[f].len();
            if n_edges == 0 {
                return None;
            }
            let col = q.column(f);
            let mut pos = [0.0f64; QUANT_BINS];
            let mut neg = [0.0f64; QUANT_BINS];
            for &i in samples {
                let b = col[i] as usize;
                if labels[i] > 0 {
                    pos[b] += weights[i];
                } else {
                    neg[b] += weights[i];
                }
            }
            let total_pos: f64 = pos.iter().sum();
            let total_neg: f64 = neg.iter().sum();
            let (mut lp, mut ln) = (0.0f64, 0.0f64);
            let mut best: Option<Split> = None;
            for b in 0..n_edges {
                lp += pos[b];
                ln += neg[b];
                let err = lp.min(ln) + (total_pos - lp).min(total_neg - ln);
                if best.is_none_or(|s| err < s.error) {
                    best = Some(Split {
                        error: err,
                        feature: f,
                        bin: b,
                    });
                }
            }
            best
        })
        .collect();
    // Fixed-order reduction: lowest error, then lowest feature index.
    candidates
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<Split>, s| match acc {
            Some(a) if a.error <= s.error => Some(a),
            _ => Some(s),
        })
}

fn majority(labels: &[i8], weights: &[f64], samples: &[usize], fallback: i8) -> i8 {
    if samples.is_empty() {
        return fallback;
    }
    let (mut pos, mut neg) = (0.0, 0.0);
    for &i in samples {
        if labels[i] > 0 {
            pos += weights[i];
        } else {
            neg += weights[i];
        }
    }
    if pos >= neg {
        1
    } else {
        -1
    }
}

struct Builder<'a, T> {
    q: &'a QuantizedFeatures<T>,
    labels: &'a [i8],
    weights: &'a [f64],
    depth: usize,
    features: Vec<u32>,
    thresholds: Vec<T>,
    votes: Vec<i8>,
}

impl<T: Real> Builder<'_, T> {
    fn grow(&mut self, node: usize, level: usize, samples: Vec<usize>, parent_vote: i8) {
        let vote = majority(self.labels, self.weights, &samples, parent_vote);
        if level == self.depth {
            self.votes[node - self.features.len()] = vote;
            return;
        }
        let split = best_split(self.q, self.labels, self.weights, &samples);
        let (left, right) = match split {
            Some(s) => {
                self.features[node] = s.feature as u32;
                self.thresholds[node] = self.q.edges[s.feature][s.bin];
                let col = self.q.column(s.feature);
                samples
                    .into_iter()
                    .partition(|&i| (col[i] as usize) <= s.bin)
            }
            None => {
                // Nothing separable: route everything left.
                self.features[node] = 0;
                self.thresholds[node] = T::max_value();
                (samples, Vec::new())
            }
        };
        self.grow(2 * node + 1, level + 1, left, vote);
        self.grow(2 * node + 2, level + 1, right, vote);
    }
}

/// Greedy tree on pre-quantized features over the given sample subset.
pub(crate) fn fit_tree<T: Real>(
    q: &QuantizedFeatures<T>,
    labels: &[i8],
    weights: &[f64],
    depth: usize,
) -> DecisionTree<T> {
    let has_pos = labels.iter().any(|&y| y > 0);
    let has_neg = labels.iter().any(|&y| y < 0);
    if !(has_pos && has_neg) {
        return DecisionTree::leaf(if has_pos { 1 } else { -1 });
    }
    let internal = (1usize << depth) - 1;
    let mut b = Builder {
        q,
        labels,
        weights,
        depth,
        features: vec![0; internal],
        thresholds: vec![T::zero(); internal],
        votes: vec![1; internal + 1],
    };
    b.grow(0, 0, (0..labels.len()).collect(), 1);
    DecisionTree {
        depth,
        features: b.features,
        thresholds: b.thresholds,
        votes: b.votes,
    }
}

pub(crate) fn check_labels(labels: &[i8], rows: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::invalid(format!(
            "{} labels for {} samples",
            labels.len(),
            rows
        )));
    }
    if labels.iter().any(|&y| y != 1 && y != -1) {
        return Err(Error::invalid("labels must be +1 or -1"));
    }
    Ok(())
}

/// Trains one weighted decision tree of `depth` (1..=5) by exhaustive search
/// over 256 quantized thresholds per feature.
///
/// Single-label data yields a depth-0 leaf (check [`DecisionTree::is_leaf`]).
pub fn train_tree<T: Real>(
    features: &FeatureMatrix<T>,
    labels: &[i8],
    weights: &[f64],
    depth: usize,
) -> Result<DecisionTree<T>> {
    if !(1..=MAX_DEPTH).contains(&depth) {
        return Err(Error::invalid(format!("tree depth {depth} outside 1..=5")));
    }
    if features.rows() == 0 {
        return Err(Error::invalid("no training samples"));
    }
    check_labels(labels, features.rows())?;
    if weights.len() != features.rows() || weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::invalid(
            "weights must be one nonnegative value per sample",
        ));
    }
    if !features.is_finite() {
        return Err(Error::invalid("non-finite feature value"));
    }
    let q = QuantizedFeatures::fit(features);
    let tree = fit_tree(&q, labels, weights, depth);
    if tree.is_leaf() {
        log::warn!("train_tree: all labels equal, returning a single leaf");
    }
    Ok(tree)
}
