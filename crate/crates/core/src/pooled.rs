//! Spatially pooled covariance and LBP channels.
//!
//! Both families are computed on dense patches at step 1 and max-pooled
//! onto the same 4-pixel cell grid as the aggregated channels, so they can be
//! appended to an ACF stack.

use crate::channels::SHRINK;
use crate::error::{Error, Result};
use crate::raster::{ChannelStack, Raster};
use crate::scalar::Real;

/// Number of per-pixel variates.
pub const NUM_VARIATES: usize = 9;
/// Variate order of a [`VariateStack`].
pub const VARIATE_NAMES: [&str; NUM_VARIATES] =
    ["x", "y", "|Ix|", "|Iy|", "|Ixx|", "|Iyy|", "M", "O1", "O2"];
/// Length of a covariance descriptor.
pub const COV_DIM: usize = 42;
/// Patch sizes of the pooled covariance channels.
pub const COV_PATCHES: [usize; 3] = [4, 8, 16];
/// Pooling region of the covariance channels (one cell).
pub const COV_POOL: usize = 4;

/// Number of uniform 8-bit patterns.
pub const LBP_BINS: usize = 58;
/// Side of the patch an LBP histogram is computed over.
pub const LBP_PATCH: usize = 4;
/// Side of the LBP max-pooling region.
pub const LBP_POOL: usize = 8;

/// Nine per-pixel variates in [`VARIATE_NAMES`] order.
#[derive(Debug, Clone)]
pub struct VariateStack<T> {
    pub channels: [Raster<T>; NUM_VARIATES],
}

impl<T: Real> VariateStack<T> {
    pub fn width(&self) -> usize {
        self.channels[0].width()
    }

    pub fn height(&self) -> usize {
        self.channels[0].height()
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> [T; NUM_VARIATES] {
        std::array::from_fn(|k| self.channels[k].get(x, y))
    }
}

/// `atan2` evaluated by its piecewise arctan definition; `None` at the origin.
pub fn atan2_branch<T: Real>(y: T, x: T) -> Option<T> {
    let pi = T::PI();
    let zero = T::zero();
    if x > zero {
        Some((y / x).atan())
    } else if x < zero {
        if y >= zero {
            Some((y / x).atan() + pi)
        } else {
            Some((y / x).atan() - pi)
        }
    } else if y > zero {
        Some(T::FRAC_PI_2())
    } else if y < zero {
        Some(-T::FRAC_PI_2())
    } else {
        None
    }
}

/// Edge orientation folded onto `(0, pi]`; 0 where the gradient vanishes.
pub fn folded_orientation<T: Real>(iy: T, ix: T) -> T {
    match atan2_branch(iy, ix) {
        Some(a) if a > T::zero() => a,
        Some(a) => a + T::PI(),
        None => T::zero(),
    }
}

/// `arctan(|Ix| / |Iy|)` with `0/0 -> 0`.
pub fn unsigned_orientation<T: Real>(ix: T, iy: T) -> T {
    let (ax, ay) = (ix.abs(), iy.abs());
    if ax == T::zero() && ay == T::zero() {
        T::zero()
    } else if ay == T::zero() {
        T::FRAC_PI_2()
    } else {
        (ax / ay).atan()
    }
}

/// Computes the nine variates with centered differences and edge replication.
pub fn variate_image<T: Real>(luminance: &Raster<T>) -> Result<VariateStack<T>> {
    let (w, h) = (luminance.width(), luminance.height());
    if w < 3 || h < 3 {
        return Err(Error::invalid(format!(
            "variate image needs at least 3x3 pixels, got {w}x{h}"
        )));
    }
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let at = |x: isize, y: isize| luminance.get_clamped(x, y);
    let mut channels: [Vec<T>; NUM_VARIATES] = std::array::from_fn(|_| Vec::with_capacity(w * h));
    for y in 0..h as isize {
        for x in 0..w as isize {
            let ix = (at(x + 1, y) - at(x - 1, y)) * half;
            let iy = (at(x, y + 1) - at(x, y - 1)) * half;
            let ixx = at(x + 1, y) - two * at(x, y) + at(x - 1, y);
            let iyy = at(x, y + 1) - two * at(x, y) + at(x, y - 1);
            let values = [
                T::from_usize_lossy(x as usize),
                T::from_usize_lossy(y as usize),
                ix.abs(),
                iy.abs(),
                ixx.abs(),
                iyy.abs(),
                (ix * ix + iy * iy).sqrt(),
                unsigned_orientation(ix, iy),
                folded_orientation(iy, ix),
            ];
            for (c, v) in channels.iter_mut().zip(values) {
                c.push(v);
            }
        }
    }
    Ok(VariateStack {
        channels: channels.map(|c| Raster::from_vec(w, h, c).unwrap()),
    })
}

/// Axis-aligned pixel rectangle `[x, x+width) x [y, y+height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelRect {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        PixelRect {
            x,
            y,
            width,
            height,
        }
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }
}

/// Index pairs `(i, j)`, `i <= j`, of the retained covariance entries.
pub fn cov_entry_pairs() -> impl Iterator<Item = (usize, usize)> {
    (0..NUM_VARIATES)
        .flat_map(|i| (i..NUM_VARIATES).map(move |j| (i, j)))
        .filter(|&(i, j)| !(i < 2 && j < 2))
}

/// Upper triangle of a 9x9 covariance matrix without var(x), var(y), cov(x,y).
#[derive(Debug, Clone, PartialEq)]
pub struct CovDescriptor<T> {
    pub values: [T; COV_DIM],
}

impl<T: Real> CovDescriptor<T> {
    /// Rebuilds the symmetric matrix, filling the location block with the
    /// exact sample moments of pixel coordinates over a full `w x h` rectangle.
    pub fn full_matrix(&self, region: PixelRect) -> [[T; NUM_VARIATES]; NUM_VARIATES] {
        let mut m = [[T::zero(); NUM_VARIATES]; NUM_VARIATES];
        for (&v, (i, j)) in self.values.iter().zip(cov_entry_pairs()) {
            m[i][j] = v;
            m[j][i] = v;
        }
        let n = region.area() as f64;
        let coord_var = |len: usize| {
            let l = len as f64;
            (l * l - 1.0) / 12.0 * n / (n - 1.0)
        };
        m[0][0] = T::lit(coord_var(region.width));
        m[1][1] = T::lit(coord_var(region.height));
        m
    }
}

/// Sample covariance (divide by `n-1`) of the variates over a region,
/// accumulated with the online co-moment update.
pub fn covariance_descriptor<T: Real>(
    variates: &VariateStack<T>,
    region: PixelRect,
) -> Result<CovDescriptor<T>> {
    if region.width < 2 || region.height < 2 {
        return Err(Error::invalid(format!(
            "covariance region must be at least 2x2, got {}x{}",
            region.width, region.height
        )));
    }
    if region.x + region.width > variates.width() || region.y + region.height > variates.height() {
        return Err(Error::OutOfBounds {
            region: format!("{region:?}"),
            width: variates.width(),
            height: variates.height(),
        });
    }
    let mut mean = [T::zero(); NUM_VARIATES];
    let mut comoment = [[T::zero(); NUM_VARIATES]; NUM_VARIATES];
    let mut n = T::zero();
    for y in region.y..region.y + region.height {
        for x in region.x..region.x + region.width {
            let v = variates.at(x, y);
            n += T::one();
            let delta: [T; NUM_VARIATES] = std::array::from_fn(|k| v[k] - mean[k]);
            for k in 0..NUM_VARIATES {
                mean[k] += delta[k] / n;
            }
            for i in 0..NUM_VARIATES {
                for j in i..NUM_VARIATES {
                    comoment[i][j] += delta[i] * (v[j] - mean[j]);
                }
            }
        }
    }
    let denom = n - T::one();
    let mut values = [T::zero(); COV_DIM];
    for (slot, (i, j)) in values.iter_mut().zip(cov_entry_pairs()) {
        *slot = comoment[i][j] / denom;
    }
    Ok(CovDescriptor { values })
}

/// Top-left coordinate of the `patch`-sized window centred on `pos`, shifted to lie inside `len`.
#[inline]
fn patch_origin(pos: usize, patch: usize, len: usize) -> usize {
    pos.saturating_sub(patch / 2).min(len.saturating_sub(patch))
}

/// Pooled covariance channels plus the patch sizes that did not fit.
#[derive(Debug, Clone)]
pub struct SpCov<T> {
    pub stack: ChannelStack<T>,
    /// Patch sizes larger than the raster; their channels are all zero.
    pub missing_scales: Vec<usize>,
}

/// Dense covariance descriptors of every centred patch, max-pooled per cell.
///
/// Each pixel owns the patch centred on it (shifted inward at borders); the
/// descriptors of the pixels in a 4x4 cell are reduced by element-wise max.
/// Output is 126 channels (3 patch sizes x 42) on the `ceil(dim/4)` grid.
pub fn sp_cov<T: Real>(luminance: &Raster<T>) -> Result<SpCov<T>> {
    let variates = variate_image(luminance)?;
    let (w, h) = (variates.width(), variates.height());
    let (cw, ch) = (w.div_ceil(COV_POOL), h.div_ceil(COV_POOL));
    let mut stack = ChannelStack::new(cw, ch, SHRINK);
    let mut missing_scales = Vec::new();

    // Centered copies of the variates (f64) for well-conditioned moment sums.
    let centered: Vec<Vec<f64>> = variates
        .channels
        .iter()
        .map(|r| {
            let vals: Vec<f64> = r.as_slice().iter().map(|v| v.as_f64()).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            vals.into_iter().map(|v| v - m).collect()
        })
        .collect();

    for &patch in &COV_PATCHES {
        let pooled = if patch > w || patch > h {
            log::warn!("sp-cov: {w}x{h} raster is smaller than the {patch}px patch");
            missing_scales.push(patch);
            vec![vec![0.0f64; cw * ch]; COV_DIM]
        } else {
            pooled_cov_scale(&centered, w, h, patch)
        };
        for (k, plane) in pooled.into_iter().enumerate() {
            let raster = Raster::from_vec(cw, ch, plane.into_iter().map(T::lit).collect())?;
            stack.push(format!("cov{patch}_{k:02}"), raster)?;
        }
    }
    Ok(SpCov {
        stack,
        missing_scales,
    })
}

const NUM_MOMENTS: usize = NUM_VARIATES + NUM_VARIATES * (NUM_VARIATES + 1) / 2;

fn pooled_cov_scale(centered: &[Vec<f64>], w: usize, h: usize, patch: usize) -> Vec<Vec<f64>> {
    let (cw, ch) = (w.div_ceil(COV_POOL), h.div_ceil(COV_POOL));
    let pairs: Vec<(usize, usize)> = (0..NUM_VARIATES)
        .flat_map(|i| (i..NUM_VARIATES).map(move |j| (i, j)))
        .collect();
    let moment = |idx: usize, m: usize| -> f64 {
        if m < NUM_VARIATES {
            centered[m][idx]
        } else {
            let (i, j) = pairs[m - NUM_VARIATES];
            centered[i][idx] * centered[j][idx]
        }
    };
    let kept: Vec<usize> = pairs
        .iter()
        .enumerate()
        .filter(|(_, &(i, j))| !(i < 2 && j < 2))
        .map(|(p, _)| p)
        .collect();

    let n = (patch * patch) as f64;
    let mut out = vec![vec![f64::NEG_INFINITY; cw * ch]; COV_DIM];
    let mut col_sums = vec![[0.0f64; NUM_MOMENTS]; w];
    let mut desc_row = vec![[0.0f64; COV_DIM]; w + 1 - patch];
    let max_origin = h - patch;

    for ty in 0..=max_origin {
        // Vertical sums over rows [ty, ty + patch).
        if ty == 0 {
            for (x, cs) in col_sums.iter_mut().enumerate() {
                *cs = [0.0; NUM_MOMENTS];
                for y in 0..patch {
                    let idx = y * w + x;
                    for (m, slot) in cs.iter_mut().enumerate() {
                        *slot += moment(idx, m);
                    }
                }
            }
        } else {
            for (x, cs) in col_sums.iter_mut().enumerate() {
                let add = (ty + patch - 1) * w + x;
                let sub = (ty - 1) * w + x;
                for (m, slot) in cs.iter_mut().enumerate() {
                    *slot += moment(add, m) - moment(sub, m);
                }
            }
        }
        // Horizontal sliding window -> descriptors for every origin in this row.
        let mut acc = [0.0f64; NUM_MOMENTS];
        for cs in &col_sums[..patch] {
            for m in 0..NUM_MOMENTS {
                acc[m] += cs[m];
            }
        }
        for tx in 0..=w - patch {
            if tx > 0 {
                for m in 0..NUM_MOMENTS {
                    acc[m] += col_sums[tx + patch - 1][m] - col_sums[tx - 1][m];
                }
            }
            let desc = &mut desc_row[tx];
            for (slot, &p) in desc.iter_mut().zip(&kept) {
                let (i, j) = pairs[p];
                *slot = (acc[NUM_VARIATES + p] - acc[i] * acc[j] / n) / (n - 1.0);
            }
        }
        // Pool into the cells of every pixel row whose patch origin is `ty`.
        for y in 0..h {
            if patch_origin(y, patch, h) != ty {
                continue;
            }
            let cy = y / COV_POOL;
            for x in 0..w {
                let desc = &desc_row[patch_origin(x, patch, w)];
                let cell = cy * cw + x / COV_POOL;
                for k in 0..COV_DIM {
                    if desc[k] > out[k][cell] {
                        out[k][cell] = desc[k];
                    }
                }
            }
        }
    }
    out
}

/// Neighbour offsets in clockwise order starting at the top-left pixel.
const LBP_NEIGHBOURS: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
];

/// 8-bit LBP code of an interior pixel. The first neighbour (top-left) is the
/// most significant bit; a bit is set when the neighbour is `>=` the centre.
pub fn lbp_code<T: Real>(luminance: &Raster<T>, x: usize, y: usize) -> u8 {
    let centre = luminance.get(x, y);
    LBP_NEIGHBOURS.iter().fold(0u8, |code, &(dx, dy)| {
        let v = luminance.get((x as isize + dx) as usize, (y as isize + dy) as usize);
        (code << 1) | u8::from(v >= centre)
    })
}

/// LBP codes of every pixel; border pixels carry no code.
#[derive(Debug, Clone, PartialEq)]
pub struct LbpCodeMap {
    width: usize,
    height: usize,
    codes: Vec<Option<u8>>,
}

impl LbpCodeMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn code(&self, x: usize, y: usize) -> Option<u8> {
        self.codes[y * self.width + x]
    }
}

pub fn lbp_code_map<T: Real>(luminance: &Raster<T>) -> Result<LbpCodeMap> {
    let (w, h) = (luminance.width(), luminance.height());
    if w < 3 || h < 3 {
        return Err(Error::invalid(format!(
            "LBP needs at least 3x3 pixels, got {w}x{h}"
        )));
    }
    let mut codes = vec![None; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            codes[y * w + x] = Some(lbp_code(luminance, x, y));
        }
    }
    Ok(LbpCodeMap {
        width: w,
        height: h,
        codes,
    })
}

/// Circular bit transitions of an 8-bit code.
pub const fn lbp_transitions(code: u8) -> u32 {
    (code ^ code.rotate_left(1)).count_ones()
}

pub const fn is_uniform(code: u8) -> bool {
    lbp_transitions(code) <= 2
}

const fn build_uniform_table() -> [u8; 256] {
    let mut table = [u8::MAX; 256];
    let mut next = 0u8;
    let mut code = 0usize;
    while code < 256 {
        if is_uniform(code as u8) {
            table[code] = next;
            next += 1;
        }
        code += 1;
    }
    table
}

static UNIFORM_TABLE: [u8; 256] = build_uniform_table();

/// Histogram bin of a uniform code (bins ordered by code value); `None` for
/// non-uniform codes, which are dropped.
#[inline]
pub fn uniform_bin(code: u8) -> Option<usize> {
    match UNIFORM_TABLE[code as usize] {
        u8::MAX => None,
        b => Some(b as usize),
    }
}

/// 58-bin uniform-pattern histogram (raw counts).
#[derive(Debug, Clone, PartialEq)]
pub struct LbpHistogram<T> {
    pub bins: [T; LBP_BINS],
}

/// Counts uniform codes inside `region`; border pixels and non-uniform codes add nothing.
pub fn lbp_histogram<T: Real>(codes: &LbpCodeMap, region: PixelRect) -> LbpHistogram<T> {
    let mut bins = [T::zero(); LBP_BINS];
    let x_end = (region.x + region.width).min(codes.width);
    let y_end = (region.y + region.height).min(codes.height);
    for y in region.y..y_end {
        for x in region.x..x_end {
            if let Some(b) = codes.code(x, y).and_then(uniform_bin) {
                bins[b] += T::one();
            }
        }
    }
    LbpHistogram { bins }
}

/// Rectangle of the `LBP_PATCH` patch owned by pixel `(x, y)`.
pub fn lbp_patch_rect(x: usize, y: usize, width: usize, height: usize) -> PixelRect {
    PixelRect::new(
        patch_origin(x, LBP_PATCH, width),
        patch_origin(y, LBP_PATCH, height),
        LBP_PATCH.min(width),
        LBP_PATCH.min(height),
    )
}

/// Pixel range of the pooling region of cell `c`: `[4c - 2, 4c + 6)` clipped to `len`.
pub fn lbp_pool_range(cell: usize, len: usize) -> std::ops::Range<usize> {
    let start = (cell * SHRINK).saturating_sub((LBP_POOL - SHRINK) / 2);
    let end = (cell * SHRINK + SHRINK + (LBP_POOL - SHRINK) / 2).min(len);
    start..end
}

/// Pooled and plain LBP histogram channels (116 = 58 + 58) on the cell grid.
///
/// Channels `splbp_XX` hold, per cell, the bin-wise max of the 4x4 patch
/// histograms of every pixel in the 8x8 region centred on the cell (stride 4).
/// Channels `lbp_XX` hold the histogram of the cell's own pixels.
pub fn sp_lbp<T: Real>(luminance: &Raster<T>) -> Result<ChannelStack<T>> {
    let codes = lbp_code_map(luminance)?;
    let (w, h) = (codes.width, codes.height);
    let (cw, ch) = (w.div_ceil(SHRINK), h.div_ceil(SHRINK));
    let mut pooled = vec![vec![T::zero(); cw * ch]; LBP_BINS];
    let mut plain = vec![vec![T::zero(); cw * ch]; LBP_BINS];

    let mut counts = [0u16; LBP_BINS];
    let mut touched = Vec::with_capacity(LBP_PATCH * LBP_PATCH);
    for cy in 0..ch {
        for cx in 0..cw {
            let cell = cy * cw + cx;
            let mut best = [0u16; LBP_BINS];
            for y in lbp_pool_range(cy, h) {
                for x in lbp_pool_range(cx, w) {
                    let rect = lbp_patch_rect(x, y, w, h);
                    for py in rect.y..rect.y + rect.height {
                        for px in rect.x..rect.x + rect.width {
                            if let Some(b) = codes.code(px, py).and_then(uniform_bin) {
                                if counts[b] == 0 {
                                    touched.push(b);
                                }
                                counts[b] += 1;
                            }
                        }
                    }
                    for &b in &touched {
                        best[b] = best[b].max(counts[b]);
                        counts[b] = 0;
                    }
                    touched.clear();
                }
            }
            let own = lbp_histogram::<T>(
                &codes,
                PixelRect::new(cx * SHRINK, cy * SHRINK, SHRINK, SHRINK),
            );
            for b in 0..LBP_BINS {
                pooled[b][cell] = T::from_u16(best[b]).unwrap();
                plain[b][cell] = own.bins[b];
            }
        }
    }

    let mut stack = ChannelStack::new(cw, ch, SHRINK);
    for (b, plane) in pooled.into_iter().enumerate() {
        stack.push(format!("splbp_{b:02}"), Raster::from_vec(cw, ch, plane)?)?;
    }
    for (b, plane) in plain.into_iter().enumerate() {
        stack.push(format!("lbp_{b:02}"), Raster::from_vec(cw, ch, plane)?)?;
    }
    Ok(stack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn branch_table_cases() {
        assert_eq!(folded_orientation(1.0f64, 0.0), PI / 2.0);
        let o = folded_orientation(-1.0f64, -1.0);
        assert!((o - PI / 4.0).abs() < 1e-15);
        assert_eq!(folded_orientation(0.0f64, 0.0), 0.0);
        // Negative zero still takes the y >= 0 branch.
        assert_eq!(folded_orientation(-0.0f64, -1.0), PI);
        assert_eq!(unsigned_orientation(0.0f64, 0.0), 0.0);
        assert_eq!(unsigned_orientation(1.0f64, 0.0), PI / 2.0);
    }

    #[test]
    fn constant_image_variates() {
        let v = variate_image(&Raster::filled(5, 4, 0.3f64)).unwrap();
        for k in 2..NUM_VARIATES {
            assert!(v.channels[k].as_slice().iter().all(|&x| x == 0.0));
        }
        assert_eq!(v.channels[0].get(3, 2), 3.0);
        assert_eq!(v.channels[1].get(3, 2), 2.0);
    }

    #[test]
    fn small_rasters_are_rejected() {
        assert!(variate_image(&Raster::filled(2, 5, 0.0f64)).is_err());
        assert!(lbp_code_map(&Raster::filled(5, 2, 0.0f64)).is_err());
    }

    #[test]
    fn covariance_region_errors() {
        let v = variate_image(&Raster::filled(6, 6, 0.0f64)).unwrap();
        assert!(matches!(
            covariance_descriptor(&v, PixelRect::new(4, 4, 4, 4)),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(covariance_descriptor(&v, PixelRect::new(0, 0, 1, 4)).is_err());
        let d = covariance_descriptor(&v, PixelRect::new(1, 1, 4, 4)).unwrap();
        // Only coordinate-vs-variate entries could be nonzero, and the variates are constant.
        assert!(d.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn retained_entries() {
        let pairs: Vec<_> = cov_entry_pairs().collect();
        assert_eq!(pairs.len(), COV_DIM);
        assert!(!pairs.contains(&(0, 0)) && !pairs.contains(&(0, 1)) && !pairs.contains(&(1, 1)));
        assert!(pairs.contains(&(0, 2)) && pairs.contains(&(8, 8)));
    }

    #[test]
    fn lbp_codes_by_hand() {
        let flat = Raster::filled(3, 3, 7.0f64);
        assert_eq!(lbp_code(&flat, 1, 1), 255);
        let mut peak = Raster::filled(3, 3, 0.0f64);
        peak.set(1, 1, 10.0);
        assert_eq!(lbp_code(&peak, 1, 1), 0);
        // Clockwise from top-left: TL=9, T=1, TR=9, R=1, BR=9, B=1, BL=9, L=1.
        let alt =
            Raster::from_vec(3, 3, vec![9.0f64, 1.0, 9.0, 1.0, 5.0, 1.0, 9.0, 1.0, 9.0]).unwrap();
        assert_eq!(lbp_code(&alt, 1, 1), 0b1010_1010);
        assert!(!is_uniform(0b1010_1010));
    }

    #[test]
    fn uniform_table_is_dense() {
        let bins: Vec<usize> = (0..=255u8).filter_map(uniform_bin).collect();
        assert_eq!(bins, (0..LBP_BINS).collect::<Vec<_>>());
        assert_eq!(uniform_bin(0), Some(0));
        assert_eq!(uniform_bin(255), Some(LBP_BINS - 1));
    }

    #[test]
    fn constant_image_lbp_mass_in_255_bin() {
        let s = sp_lbp(&Raster::filled(12, 12, 0.5f64)).unwrap();
        assert_eq!(s.num_channels(), 2 * LBP_BINS);
        let b255 = uniform_bin(255).unwrap();
        for c in 0..2 * LBP_BINS {
            let nonzero = s.channel(c).iter().any(|&v| v > 0.0);
            assert_eq!(nonzero, c % LBP_BINS == b255, "channel {c}");
        }
    }

    #[test]
    fn sp_cov_shapes_and_missing_scales() {
        let lum = Raster::from_fn(10, 9, |x, y| ((x * 7 + y * 3) % 5) as f64);
        let s = sp_cov(&lum).unwrap();
        assert_eq!(s.stack.num_channels(), 3 * COV_DIM);
        assert_eq!((s.stack.width(), s.stack.height()), (3, 3));
        assert_eq!(s.missing_scales, vec![16]);
        let flat = sp_cov(&Raster::filled(20, 20, 0.1f64)).unwrap();
        assert!(flat.stack.as_slice().iter().all(|&v| v.abs() < 1e-12));
    }
}
