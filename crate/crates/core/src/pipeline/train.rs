use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ClassConfig, PipelineConfig};
use super::{class_seed, load_split, mix_seed, read_layout, resolve_image, Split};
use crate::boosting::{
    bootstrap_train, BoostedModel, BootstrapParams, BootstrapRound, Ensemble, FeatureMatrix,
    HardNegative, NegativeSource, WindowGeometry,
};
use crate::calibrate::{fit_platt, CalibrationParams};
use crate::channels::SHRINK;
use crate::dataset::{item_rng, jitter_transforms, load_rgb, render_crop, NEGATIVE_MAX_OVERLAP};
use crate::detect::{
    build_pyramid, pascal_overlap, pyramid_scales, scan_ensemble, window_box, BoundingBox, Pyramid,
};
use crate::error::{Error, Result};
use crate::features::{compute_features, FeatureCombination, FeatureLayout};
use crate::scalar::Real;

/// Pixels of image context rendered around every training crop so that
/// border channels see the same neighbourhood as in a full image.
pub const CROP_CONTEXT: usize = 16;

const POSITIVE_STREAM: u64 = 1;
const NEGATIVE_STREAM: u64 = 1 << 20;

/// Features of the window at the centre of a crop with [`CROP_CONTEXT`].
pub fn crop_features<T: Real>(crop: &RgbImage, layout: FeatureLayout) -> Result<Vec<T>> {
    let stack = compute_features::<T>(crop, layout.combination)?;
    let c = CROP_CONTEXT / SHRINK;
    layout.extract(&stack, layout.combination, c, c)
}

fn layout_for(window: &WindowGeometry, combination: FeatureCombination) -> FeatureLayout {
    let (cells_w, cells_h) = window.cells();
    FeatureLayout {
        combination,
        cells_w,
        cells_h,
    }
}

/// Decoded training images with the boxes of one class.
pub struct TrainingImages {
    pub names: Vec<String>,
    pub images: Vec<RgbImage>,
    pub boxes: Vec<Vec<BoundingBox>>,
}

impl TrainingImages {
    fn index(&self) -> BTreeMap<&str, usize> {
        self.names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect()
    }
}

/// Negatives drawn from training images: random scan windows of any
/// pyramid level first, then
/// false positives of the current cascade. A cascade hit is false when it
/// would not match any box of the class at `max_overlap`.
struct ImageNegatives<'a, T> {
    data: &'a TrainingImages,
    pyramids: &'a [Option<Pyramid<T>>],
    window: WindowGeometry,
    layout: FeatureLayout,
    per_image: usize,
    max_overlap: f64,
    seed: u64,
}

impl<T: Real> NegativeSource<T> for ImageNegatives<'_, T> {
    fn initial_negatives(&mut self) -> Result<FeatureMatrix<T>> {
        let rows: Vec<Vec<Vec<T>>> = (0..self.data.images.len())
            .into_par_iter()
            .map(|i| {
                let Some(pyr) = &self.pyramids[i] else {
                    return Ok(Vec::new());
                };
                let boxes = &self.data.boxes[i];
                let mut candidates = Vec::new();
                for (li, level) in pyr.levels.iter().enumerate() {
                    let stack = &level.stack;
                    if stack.width() < self.layout.cells_w || stack.height() < self.layout.cells_h {
                        continue;
                    }
                    for y in 0..=stack.height() - self.layout.cells_h {
                        for x in 0..=stack.width() - self.layout.cells_w {
                            let Some(b) = window_box(pyr, li, self.window, x, y) else {
                                continue;
                            };
                            if boxes
                                .iter()
                                .all(|g| pascal_overlap(&b, g) <= NEGATIVE_MAX_OVERLAP)
                            {
                                candidates.push((li, x, y));
                            }
                        }
                    }
                }
                if candidates.len() < self.per_image {
                    log::debug!("{}: fewer negatives than requested", self.data.names[i]);
                }
                let mut rng = item_rng(self.seed, i as u64);
                let picked = rand::seq::index::sample(
                    &mut rng,
                    candidates.len(),
                    self.per_image.min(candidates.len()),
                );
                picked
                    .into_iter()
                    .map(|k| {
                        let (li, x, y) = candidates[k];
                        self.layout
                            .extract(&pyr.levels[li].stack, pyr.combination, x, y)
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        FeatureMatrix::from_rows(self.layout.num_features(), rows.into_iter().flatten())
    }

    fn harvest(&mut self, model: &Ensemble<T>, cap: usize) -> Result<Vec<HardNegative<T>>> {
        let mut found: Vec<(T, usize, usize, usize, usize)> = (0..self.pyramids.len())
            .into_par_iter()
            .map(|i| {
                let Some(pyr) = &self.pyramids[i] else {
                    return Ok(Vec::new());
                };
                let hits = scan_ensemble(model, self.layout, self.window, pyr, 1)?;
                Ok(hits
                    .into_iter()
                    .filter(|h| {
                        self.data.boxes[i]
                            .iter()
                            .all(|g| pascal_overlap(&h.bbox, g) < self.max_overlap)
                    })
                    .map(|h| (h.raw, i, h.level, h.y, h.x))
                    .collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        found.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then((a.1, a.2, a.3, a.4).cmp(&(b.1, b.2, b.3, b.4)))
        });
        found.truncate(cap);
        found
            .into_iter()
            .map(|(score, i, level, y, x)| {
                let pyr = self.pyramids[i].as_ref().expect("harvested from a pyramid");
                let features =
                    self.layout
                        .extract(&pyr.levels[level].stack, pyr.combination, x, y)?;
                Ok(HardNegative { features, score })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcategoryTraining {
    pub subcategory: usize,
    pub window: WindowGeometry,
    pub positives: usize,
    pub hard_negatives: usize,
    pub rounds: Vec<BootstrapRound>,
    pub calibration: CalibrationParams<f64>,
    pub calibration_converged: bool,
    pub model: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub class: String,
    pub features: FeatureCombination,
    pub images: usize,
    pub subcategories: Vec<SubcategoryTraining>,
}

pub fn model_file_name(class: &str, subcategory: usize) -> String {
    format!("{class}_{subcategory:02}.json")
}

fn load_training_images(cfg: &PipelineConfig, class: &ClassConfig) -> Result<TrainingImages> {
    let (samples, _) = load_split(cfg, Split::Train)?;
    let mut per_image: BTreeMap<String, Vec<BoundingBox>> = BTreeMap::new();
    for s in &samples {
        let entry = per_image.entry(s.image.clone()).or_default();
        if class.labels.contains(&s.class) {
            entry.push(s.bbox);
        }
    }
    let names: Vec<String> = per_image.keys().cloned().collect();
    let images = names
        .par_iter()
        .map(|n| load_rgb(&resolve_image(cfg, n)))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainingImages {
        names,
        images,
        boxes: per_image.into_values().collect(),
    })
}

/// Trains, calibrates and saves one model per subcategory of `class`.
pub fn cmd_train<T: Real>(cfg: &PipelineConfig, class_name: &str) -> Result<TrainReport> {
    let class = cfg.class(class_name)?;
    let layout_file = read_layout(cfg, class_name)?;
    let data = load_training_images(cfg, class)?;
    let index = data.index();
    let seed = class_seed(cfg.seed, class_name);
    let subcats = &layout_file.layout.subcategories;
    let min_footprint = subcats.iter().fold((usize::MAX, usize::MAX), |(w, h), s| {
        let (fw, fh) = s.window.footprint();
        (w.min(fw), h.min(fh))
    });
    log::info!(
        "{class_name}: building {} training pyramids",
        data.images.len()
    );
    let pyramids: Vec<Option<Pyramid<T>>> = data
        .images
        .par_iter()
        .map(|img| {
            if pyramid_scales(img.width(), img.height(), min_footprint.0, min_footprint.1)
                .is_empty()
            {
                Ok(None)
            } else {
                build_pyramid(img, min_footprint, class.features, None).map(Some)
            }
        })
        .collect::<Result<_>>()?;

    let model_dir = cfg.model_dir();
    fs::create_dir_all(&model_dir).map_err(|e| Error::io(&model_dir, e))?;
    let mut report = TrainReport {
        class: class_name.to_string(),
        features: class.features,
        images: data.images.len(),
        subcategories: Vec::with_capacity(subcats.len()),
    };
    for sub in subcats {
        let window = sub.window;
        let layout = layout_for(&window, class.features);
        let members: Vec<usize> = (0..layout_file.samples.len())
            .filter(|&i| layout_file.layout.assignments[i] == sub.id)
            .collect();
        let pos_seed = mix_seed(seed, POSITIVE_STREAM + sub.id as u64);
        let rows: Vec<Vec<Vec<T>>> = members
            .par_iter()
            .map(|&i| {
                let s = &layout_file.samples[i];
                let img_idx = *index.get(s.image.as_str()).ok_or_else(|| {
                    Error::invalid(format!(
                        "image '{}' of the layout is not in the training split",
                        s.image
                    ))
                })?;
                let mut rng = item_rng(pos_seed, i as u64);
                jitter_transforms(&class.jitter, &mut rng)
                    .iter()
                    .map(|j| {
                        crop_features(
                            &render_crop(&data.images[img_idx], &s.bbox, &window, CROP_CONTEXT, j),
                            layout,
                        )
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let positives =
            FeatureMatrix::from_rows(layout.num_features(), rows.into_iter().flatten())?;
        log::info!(
            "{class_name}/{}: {} positives from {} samples",
            sub.id,
            positives.rows(),
            members.len()
        );
        let mut source = ImageNegatives {
            data: &data,
            pyramids: &pyramids,
            window,
            layout,
            per_image: class.negatives_per_image,
            max_overlap: class.eval_overlap,
            seed: mix_seed(seed, NEGATIVE_STREAM + sub.id as u64),
        };
        let params = BootstrapParams {
            schedule: class.schedule.clone(),
            shrinkage: class.shrinkage,
            depth: class.depth,
            hard_negative_cap: class.hard_negative_cap,
        };
        let out = bootstrap_train(&positives, &mut source, &params)?;
        let negatives = if out.hard_negatives.rows() > 0 {
            &out.hard_negatives
        } else {
            &out.negatives
        };
        let mut scores: Vec<T> = (0..positives.rows())
            .map(|i| out.ensemble.score(positives.row(i)))
            .collect();
        scores.extend((0..negatives.rows()).map(|i| out.ensemble.score(negatives.row(i))));
        let mut labels = vec![1i8; positives.rows()];
        labels.extend(std::iter::repeat_n(-1i8, negatives.rows()));
        let fit = fit_platt(&scores, &labels)?;
        if !fit.params.is_increasing() {
            log::warn!(
                "{class_name}/{}: calibration is not increasing in the score",
                sub.id
            );
        }
        let model = BoostedModel {
            class: class_name.to_string(),
            subcategory: sub.id,
            window,
            layout,
            shrinkage: class.shrinkage,
            tree_depth: class.depth,
            ensemble: out.ensemble,
            calibration: Some(fit.params),
        };
        let path = model_dir.join(model_file_name(class_name, sub.id));
        model.save(&path)?;
        report.subcategories.push(SubcategoryTraining {
            subcategory: sub.id,
            window,
            positives: positives.rows(),
            hard_negatives: out.hard_negatives.rows(),
            rounds: out.rounds,
            calibration: fit.params.cast(),
            calibration_converged: fit.converged,
            model: path,
        });
    }
    let dir = cfg.class_dir(class_name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join("train_report.json");
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{render_scene, SceneParams};

    #[test]
    fn crops_match_pyramid_windows() {
        let scene = render_scene(&SceneParams::default(), &mut item_rng(3, 3));
        let window = WindowGeometry::new(24, 24, 4).unwrap();
        let layout = layout_for(&window, FeatureCombination::Acf);
        let pyr: Pyramid<f64> = build_pyramid(
            &scene.image,
            window.footprint(),
            FeatureCombination::Acf,
            None,
        )
        .unwrap();
        let (ox, oy) = window.object_offset();
        for (li, (cx, cy)) in [(0usize, (8usize, 6usize)), (0, (10, 9)), (4, (6, 5))] {
            let level = &pyr.levels[li];
            let left = (cx * SHRINK) as f64 + ox;
            let top = (cy * SHRINK) as f64 + oy;
            let bbox = BoundingBox {
                left: left / level.scale_x,
                top: top / level.scale_y,
                right: (left + 24.0) / level.scale_x,
                bottom: (top + 24.0) / level.scale_y,
            };
            let crop = render_crop(
                &scene.image,
                &bbox,
                &window,
                CROP_CONTEXT,
                &crate::dataset::Jitter::IDENTITY,
            );
            let a: Vec<f64> = crop_features(&crop, layout).unwrap();
            let b = layout
                .extract(&level.stack, FeatureCombination::Acf, cx, cy)
                .unwrap();
            let (num, den) = a.iter().zip(&b).fold((0.0, 0.0), |(n, d), (x, y)| {
                (n + (x - y).powi(2), d + y * y)
            });
            let rel = (num / den).sqrt();
            println!("level {li}: relative difference {rel:.4}");
            assert!(rel < if li == 0 { 1e-9 } else { 0.1 }, "level {li}: {rel}");
        }
    }
}
