use super::geometry::{pascal_overlap, BoundingBox};
use super::Detection;
use crate::scalar::Real;

/// Greedy suppression over `(box, score)` pairs. Returns kept input indices in
/// descending score order; equal scores keep input order.
pub fn nms_indices<T: Real>(boxes: &[BoundingBox], scores: &[T], threshold: f64) -> Vec<usize> {
    assert_eq!(boxes.len(), scores.len(), "one score per box");
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept
            .iter()
            .all(|&k| pascal_overlap(&boxes[i], &boxes[k]) <= threshold)
        {
            kept.push(i);
        }
    }
    kept
}

/// Greedy non-maximum suppression on calibrated scores.
pub fn nms<T: Real>(detections: &[Detection<T>], threshold: f64) -> Vec<Detection<T>> {
    let boxes: Vec<BoundingBox> = detections.iter().map(|d| d.bbox).collect();
    let scores: Vec<T> = detections.iter().map(|d| d.score).collect();
    nms_indices(&boxes, &scores, threshold)
        .into_iter()
        .map(|i| detections[i].clone())
        .collect()
}

/// Suppresses within each class, then concatenates the classes without any
/// cross-class suppression.
pub fn fuse<T: Real>(per_class: &[(Vec<Detection<T>>, f64)]) -> Vec<Detection<T>> {
    per_class
        .iter()
        .flat_map(|(dets, threshold)| nms(dets, *threshold))
        .collect()
}
