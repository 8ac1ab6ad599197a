//! Ground-truth matching, precision-recall curves, AUC and 11-point AP.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{pascal_overlap, BoundingBox};
use crate::error::{Error, Result};

/// Relative position and size tolerance of the tolerance matcher.
pub const TOLERANCE_FRACTION: f64 = 0.25;
pub const AP_LEVELS: usize = 11;

/// How detections are paired with ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchProtocol {
    /// Overlap matching; further detections of a matched object are ignored.
    Gtsdb,
    /// Overlap matching; further detections of a matched object are false positives.
    Kitti,
    /// Centre and size within 25 % of the object's dimensions; duplicates are false positives.
    Uiuc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchLabel {
    TruePositive,
    FalsePositive,
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub bbox: BoundingBox,
    /// Excluded by a difficulty filter: neither counted nor penalized.
    pub ignored: bool,
}

impl GroundTruth {
    pub fn new(bbox: BoundingBox) -> Self {
        GroundTruth {
            bbox,
            ignored: false,
        }
    }
}

/// Detection centre and size within [`TOLERANCE_FRACTION`] of the object's width and height.
pub fn within_tolerance(det: &BoundingBox, gt: &BoundingBox) -> bool {
    let (dx, dy) = det.center();
    let (gx, gy) = gt.center();
    let (gw, gh) = (gt.width(), gt.height());
    (dx - gx).abs() <= TOLERANCE_FRACTION * gw
        && (dy - gy).abs() <= TOLERANCE_FRACTION * gh
        && (det.width() - gw).abs() <= TOLERANCE_FRACTION * gw
        && (det.height() - gh).abs() <= TOLERANCE_FRACTION * gh
}

/// Labels detections of one image, which must be sorted by descending score.
///
/// Each detection takes the unmatched, counted ground truth it overlaps most
/// (at least `min_overlap`); each ground truth is matched at most once.
pub fn match_detections(
    detections: &[BoundingBox],
    ground_truth: &[GroundTruth],
    min_overlap: f64,
    protocol: MatchProtocol,
) -> Vec<MatchLabel> {
    let mut matched = vec![false; ground_truth.len()];
    let accepts = |d: &BoundingBox, g: &BoundingBox, o: f64| match protocol {
        MatchProtocol::Uiuc => within_tolerance(d, g),
        _ => o >= min_overlap,
    };
    detections
        .iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            let mut hits_matched = false;
            let mut hits_ignored = false;
            for (j, g) in ground_truth.iter().enumerate() {
                let o = pascal_overlap(d, &g.bbox);
                if !accepts(d, &g.bbox, o) {
                    continue;
                }
                if g.ignored {
                    hits_ignored = true;
                } else if matched[j] {
                    hits_matched = true;
                } else if best.is_none_or(|(_, bo)| o > bo) {
                    best = Some((j, o));
                }
            }
            if let Some((j, _)) = best {
                matched[j] = true;
                MatchLabel::TruePositive
            } else if (hits_matched && protocol == MatchProtocol::Gtsdb)
                || (hits_ignored && !hits_matched)
            {
                MatchLabel::Ignored
            } else {
                MatchLabel::FalsePositive
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub num_ground_truth: usize,
}

impl PrCurve {
    pub fn max_recall(&self) -> f64 {
        self.points.iter().map(|p| p.recall).fold(0.0, f64::max)
    }
}

/// One point per distinct score, sweeping from the highest score down.
pub fn pr_curve(labeled: &[(f64, MatchLabel)], num_ground_truth: usize) -> Result<PrCurve> {
    if num_ground_truth == 0 {
        return Err(Error::invalid(
            "precision-recall needs at least one ground truth",
        ));
    }
    if labeled.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::invalid("NaN detection score"));
    }
    let mut order: Vec<usize> = (0..labeled.len()).collect();
    order.sort_by(|&a, &b| labeled[b].0.total_cmp(&labeled[a].0).then(a.cmp(&b)));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut points = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let score = labeled[order[i]].0;
        while i < order.len() && labeled[order[i]].0 == score {
            match labeled[order[i]].1 {
                MatchLabel::TruePositive => tp += 1,
                MatchLabel::FalsePositive => fp += 1,
                MatchLabel::Ignored => {}
            }
            i += 1;
        }
        if tp + fp == 0 {
            continue;
        }
        let p = PrPoint {
            recall: tp as f64 / num_ground_truth as f64,
            precision: tp as f64 / (tp + fp) as f64,
            threshold: score,
        };
        if points
            .last()
            .is_some_and(|q: &PrPoint| q.recall == p.recall && q.precision == p.precision)
        {
            continue;
        }
        points.push(p);
    }
    Ok(PrCurve {
        points,
        num_ground_truth,
    })
}

/// Trapezoidal area from `(0, p_1)` through every point up to the maximum recall.
pub fn auc(curve: &PrCurve) -> f64 {
    let Some(first) = curve.points.first() else {
        return 0.0;
    };
    let mut area = 0.0;
    let (mut r0, mut p0) = (0.0, first.precision);
    for p in &curve.points {
        area += (p.recall - r0) * (p.precision + p0) / 2.0;
        r0 = p.recall;
        p0 = p.precision;
    }
    area.clamp(0.0, 1.0)
}

/// Interpolated precision at recall `r`: the best precision at recall `>= r`.
pub fn interpolated_precision(curve: &PrCurve, r: f64) -> f64 {
    curve
        .points
        .iter()
        .filter(|p| p.recall >= r)
        .map(|p| p.precision)
        .fold(0.0, f64::max)
}

/// Mean interpolated precision over `levels` evenly spaced recalls in `[0, 1]`.
pub fn average_precision(curve: &PrCurve, levels: usize) -> f64 {
    if levels < 2 {
        return interpolated_precision(curve, 0.0);
    }
    let steps = (levels - 1) as f64;
    (0..levels)
        .map(|i| interpolated_precision(curve, i as f64 / steps))
        .sum::<f64>()
        / levels as f64
}

/// Detections and ground truth of one image for one class.
#[derive(Debug, Clone, Default)]
pub struct ImageCase {
    pub detections: Vec<(BoundingBox, f64)>,
    pub ground_truth: Vec<GroundTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEvaluation {
    pub class: String,
    pub ap: f64,
    pub auc: f64,
    pub max_recall: f64,
    pub num_ground_truth: usize,
    pub num_detections: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub curve: PrCurve,
}

/// Matches every image independently and sweeps the pooled labels.
pub fn evaluate_class(
    class: &str,
    images: &[ImageCase],
    min_overlap: f64,
    protocol: MatchProtocol,
) -> Result<ClassEvaluation> {
    let labeled: Vec<(f64, MatchLabel)> = images
        .par_iter()
        .map(|img| {
            let mut order: Vec<usize> = (0..img.detections.len()).collect();
            order.sort_by(|&a, &b| {
                img.detections[b]
                    .1
                    .total_cmp(&img.detections[a].1)
                    .then(a.cmp(&b))
            });
            let boxes: Vec<BoundingBox> = order.iter().map(|&i| img.detections[i].0).collect();
            let labels = match_detections(&boxes, &img.ground_truth, min_overlap, protocol);
            order
                .iter()
                .zip(labels)
                .map(|(&i, l)| (img.detections[i].1, l))
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let n_gt: usize = images
        .iter()
        .map(|i| i.ground_truth.iter().filter(|g| !g.ignored).count())
        .sum();
    let curve = pr_curve(&labeled, n_gt)?;
    Ok(ClassEvaluation {
        class: class.to_string(),
        ap: average_precision(&curve, AP_LEVELS),
        auc: auc(&curve),
        max_recall: curve.max_recall(),
        num_ground_truth: n_gt,
        num_detections: labeled.len(),
        true_positives: labeled
            .iter()
            .filter(|l| l.1 == MatchLabel::TruePositive)
            .count(),
        false_positives: labeled
            .iter()
            .filter(|l| l.1 == MatchLabel::FalsePositive)
            .count(),
        curve,
    })
}

/// Two-column `recall precision` text for plotting.
pub fn pr_points_text(curve: &PrCurve) -> String {
    let mut s = String::from("# recall precision\n");
    for p in &curve.points {
        let _ = writeln!(s, "{:.6} {:.6}", p.recall, p.precision);
    }
    s
}
