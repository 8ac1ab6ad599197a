use std::sync::atomic::{AtomicUsize, Ordering};

use image::imageops::{self, FilterType};
use image::RgbImage;
use rayon::prelude::*;

use crate::error::Result;
use crate::features::{compute_features, FeatureCombination};
use crate::raster::ChannelStack;
use crate::scalar::Real;

pub const SCALES_PER_OCTAVE: usize = 8;

/// Counters for feature work done by detection.
#[derive(Debug, Default)]
pub struct Instrumentation {
    pub pyramids_built: AtomicUsize,
    pub levels_computed: AtomicUsize,
}

impl Instrumentation {
    pub fn pyramids(&self) -> usize {
        self.pyramids_built.load(Ordering::SeqCst)
    }

    pub fn levels(&self) -> usize {
        self.levels_computed.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone)]
pub struct PyramidLevel<T> {
    /// Nominal scale `2^(-k/8)`.
    pub scale: f64,
    /// Actual per-axis ratio of the resized image to the original.
    pub scale_x: f64,
    pub scale_y: f64,
    pub stack: ChannelStack<T>,
}

#[derive(Debug, Clone)]
pub struct Pyramid<T> {
    pub image_width: u32,
    pub image_height: u32,
    pub combination: FeatureCombination,
    pub levels: Vec<PyramidLevel<T>>,
}

/// Nominal scales from 1 down to the smallest one at which a
/// `window_w x window_h` window still fits.
pub fn pyramid_scales(width: u32, height: u32, window_w: usize, window_h: usize) -> Vec<f64> {
    if window_w == 0 || window_h == 0 || (width as usize) < window_w || (height as usize) < window_h
    {
        return Vec::new();
    }
    let ratio = (width as f64 / window_w as f64).min(height as f64 / window_h as f64);
    let n = (SCALES_PER_OCTAVE as f64 * ratio.log2() + 1e-9).floor() as usize + 1;
    (0..n)
        .map(|k| (-(k as f64) / SCALES_PER_OCTAVE as f64).exp2())
        .collect()
}

/// Channels at every pyramid scale, each recomputed from the resized image.
pub fn build_pyramid<T: Real>(
    image: &RgbImage,
    window: (usize, usize),
    combination: FeatureCombination,
    instrumentation: Option<&Instrumentation>,
) -> Result<Pyramid<T>> {
    let (w, h) = image.dimensions();
    let scales = pyramid_scales(w, h, window.0, window.1);
    if scales.is_empty() {
        log::warn!(
            "{w}x{h} image is smaller than the {}x{} window",
            window.0,
            window.1
        );
    }
    if let Some(i) = instrumentation {
        i.pyramids_built.fetch_add(1, Ordering::SeqCst);
    }
    let levels = scales
        .par_iter()
        .map(|&scale| {
            let rw = ((w as f64 * scale).round() as u32).max(1);
            let rh = ((h as f64 * scale).round() as u32).max(1);
            let stack = if (rw, rh) == (w, h) {
                compute_features(image, combination)?
            } else {
                let resized = imageops::resize(image, rw, rh, FilterType::Triangle);
                compute_features(&resized, combination)?
            };
            if let Some(i) = instrumentation {
                i.levels_computed.fetch_add(1, Ordering::SeqCst);
            }
            Ok(PyramidLevel {
                scale,
                scale_x: rw as f64 / w as f64,
                scale_y: rh as f64 / h as f64,
                stack,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Pyramid {
        image_width: w,
        image_height: h,
        combination,
        levels,
    })
}
