//! Sliding-window detection over a shared channel pyramid, per-class
//! suppression and cross-class fusion.

mod geometry;
mod io;
mod nms;
mod pyramid;

pub use geometry::{pascal_overlap, BoundingBox};
pub use io::{read_detections, write_detections, DetectionRecord, DETECTION_HEADER};
pub use nms::{fuse, nms, nms_indices};
pub use pyramid::{
    build_pyramid, pyramid_scales, Instrumentation, Pyramid, PyramidLevel, SCALES_PER_OCTAVE,
};

use std::collections::BTreeMap;
use std::path::Path;

use image::RgbImage;
use rayon::prelude::*;

use crate::boosting::{BoostedModel, CascadeOutcome, Ensemble, OffsetWindow, WindowGeometry};
use crate::channels::SHRINK;
use crate::error::{Error, Result};
use crate::features::{FeatureCombination, FeatureLayout};
use crate::scalar::Real;

pub const DEFAULT_NMS_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection<T> {
    pub bbox: BoundingBox,
    pub class: String,
    pub subcategory: usize,
    pub raw: T,
    pub score: T,
}

/// A window accepted by a model's cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowHit<T> {
    pub level: usize,
    pub x: usize,
    pub y: usize,
    pub raw: T,
    pub bbox: BoundingBox,
}

/// Object box, in image coordinates and clipped to the image, of the window
/// whose top-left cell is `(x, y)` on pyramid level `level`.
pub fn window_box<T>(
    pyramid: &Pyramid<T>,
    level: usize,
    window: WindowGeometry,
    x: usize,
    y: usize,
) -> Option<BoundingBox> {
    let l = &pyramid.levels[level];
    let (ox, oy) = window.object_offset();
    let left = (x * SHRINK) as f64 + ox;
    let top = (y * SHRINK) as f64 + oy;
    BoundingBox {
        left: left / l.scale_x,
        top: top / l.scale_y,
        right: (left + window.width as f64) / l.scale_x,
        bottom: (top + window.height as f64) / l.scale_y,
    }
    .clip(pyramid.image_width as f64, pyramid.image_height as f64)
}

/// Evaluates every window position of every pyramid level (stride in cells).
///
/// Hits are ordered by level, row and column.
pub fn scan<T: Real>(
    model: &BoostedModel<T>,
    pyramid: &Pyramid<T>,
    stride: usize,
) -> Result<Vec<WindowHit<T>>> {
    scan_ensemble(&model.ensemble, model.layout, model.window, pyramid, stride)
}

/// [`scan`] for an ensemble that is not yet wrapped in a model.
pub fn scan_ensemble<T: Real>(
    ensemble: &Ensemble<T>,
    layout: FeatureLayout,
    window: WindowGeometry,
    pyramid: &Pyramid<T>,
    stride: usize,
) -> Result<Vec<WindowHit<T>>> {
    if stride == 0 {
        return Err(Error::invalid("scan stride must be at least one cell"));
    }
    let per_level: Vec<Vec<WindowHit<T>>> = pyramid
        .levels
        .par_iter()
        .enumerate()
        .map(|(li, level)| {
            let stack = &level.stack;
            if stack.width() < layout.cells_w || stack.height() < layout.cells_h {
                return Ok(Vec::new());
            }
            let offsets = layout.stack_offsets(stack, pyramid.combination)?;
            let data = stack.as_slice();
            let rows: Vec<usize> = (0..=stack.height() - layout.cells_h)
                .step_by(stride)
                .collect();
            let hits = rows
                .par_iter()
                .map(|&y| {
                    let mut out = Vec::new();
                    for x in (0..=stack.width() - layout.cells_w).step_by(stride) {
                        let view = OffsetWindow {
                            data,
                            base: y * stack.width() + x,
                            offsets: &offsets,
                        };
                        if let CascadeOutcome::Accepted(raw) = ensemble.evaluate(&view) {
                            if let Some(bbox) = window_box(pyramid, li, window, x, y) {
                                out.push(WindowHit {
                                    level: li,
                                    x,
                                    y,
                                    raw,
                                    bbox,
                                });
                            }
                        }
                    }
                    out
                })
                .collect::<Vec<_>>()
                .into_iter()
                .flatten()
                .collect();
            Ok(hits)
        })
        .collect::<Result<_>>()?;
    Ok(per_level.into_iter().flatten().collect())
}

/// Sub-detectors of one class and its suppression threshold.
#[derive(Debug, Clone)]
pub struct ClassDetectors<T> {
    pub name: String,
    pub models: Vec<BoostedModel<T>>,
    pub nms_threshold: f64,
}

#[derive(Debug, Clone)]
pub struct DetectorBank<T> {
    pub classes: Vec<ClassDetectors<T>>,
    pub stride: usize,
}

impl<T: Real> DetectorBank<T> {
    pub fn new(classes: Vec<ClassDetectors<T>>) -> Result<Self> {
        for c in &classes {
            if c.models.is_empty() {
                return Err(Error::invalid(format!("class '{}' has no models", c.name)));
            }
            if !(c.nms_threshold > 0.0 && c.nms_threshold <= 1.0) {
                return Err(Error::invalid(format!(
                    "NMS threshold {} of class '{}' outside (0, 1]",
                    c.nms_threshold, c.name
                )));
            }
            for m in &c.models {
                m.validate()?;
            }
        }
        Ok(DetectorBank { classes, stride: 1 })
    }

    /// Loads every `*.json` model in `dir`, grouped by class name.
    pub fn load_dir(dir: &Path, nms_thresholds: &BTreeMap<String, f64>) -> Result<Self> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut grouped: BTreeMap<String, Vec<BoostedModel<T>>> = BTreeMap::new();
        for p in &paths {
            let m = BoostedModel::<T>::load(p)?;
            grouped.entry(m.class.clone()).or_default().push(m);
        }
        let classes = grouped
            .into_iter()
            .map(|(name, mut models)| {
                models.sort_by_key(|m| m.subcategory);
                let nms_threshold = nms_thresholds
                    .get(&name)
                    .copied()
                    .unwrap_or(DEFAULT_NMS_THRESHOLD);
                ClassDetectors {
                    name,
                    models,
                    nms_threshold,
                }
            })
            .collect();
        Self::new(classes)
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn models(&self) -> impl Iterator<Item = &BoostedModel<T>> {
        self.classes.iter().flat_map(|c| c.models.iter())
    }

    /// Smallest feature set containing every model's channels.
    pub fn combination(&self) -> FeatureCombination {
        self.models()
            .map(|m| m.layout.combination)
            .fold(FeatureCombination::Acf, FeatureCombination::union)
    }

    /// Largest model footprint in pixels, per axis.
    pub fn max_footprint(&self) -> (usize, usize) {
        self.models().fold((0, 0), |(w, h), m| {
            let (fw, fh) = m.window.footprint();
            (w.max(fw), h.max(fh))
        })
    }

    /// Smallest model footprint in pixels, per axis.
    pub fn min_footprint(&self) -> (usize, usize) {
        self.models().fold((usize::MAX, usize::MAX), |(w, h), m| {
            let (fw, fh) = m.window.footprint();
            (w.min(fw), h.min(fh))
        })
    }
}

/// Raw detections of one class, calibrated, in (level, row, column, model) order.
pub fn detect_class<T: Real>(
    class: &ClassDetectors<T>,
    pyramid: &Pyramid<T>,
    stride: usize,
) -> Result<Vec<Detection<T>>> {
    let per_model: Vec<Vec<WindowHit<T>>> = class
        .models
        .par_iter()
        .map(|m| scan(m, pyramid, stride))
        .collect::<Result<_>>()?;
    let mut keyed: Vec<((usize, usize, usize, usize), Detection<T>)> = Vec::new();
    for (mi, (model, hits)) in class.models.iter().zip(per_model).enumerate() {
        for h in hits {
            keyed.push((
                (h.level, h.y, h.x, mi),
                Detection {
                    bbox: h.bbox,
                    class: class.name.clone(),
                    subcategory: model.subcategory,
                    raw: h.raw,
                    score: model.calibrated(h.raw),
                },
            ));
        }
    }
    keyed.sort_by_key(|(k, _)| *k);
    Ok(keyed.into_iter().map(|(_, d)| d).collect())
}

/// Runs every detector of the bank over one shared pyramid and fuses the results.
pub fn detect_all<T: Real>(
    image: &RgbImage,
    bank: &DetectorBank<T>,
    instrumentation: Option<&Instrumentation>,
) -> Result<Vec<Detection<T>>> {
    if bank.is_empty() {
        return Ok(Vec::new());
    }
    let pyramid = build_pyramid(
        image,
        bank.max_footprint(),
        bank.combination(),
        instrumentation,
    )?;
    detect_with_pyramid(&pyramid, bank)
}

/// Detection on a prebuilt pyramid whose channels cover the bank's features.
pub fn detect_with_pyramid<T: Real>(
    pyramid: &Pyramid<T>,
    bank: &DetectorBank<T>,
) -> Result<Vec<Detection<T>>> {
    let per_class: Vec<(Vec<Detection<T>>, f64)> = bank
        .classes
        .iter()
        .map(|c| Ok((detect_class(c, pyramid, bank.stride)?, c.nms_threshold)))
        .collect::<Result<_>>()?;
    Ok(fuse(&per_class))
}
