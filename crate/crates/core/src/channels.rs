//! Aggregated channel features: LUV colour, normalized gradient magnitude and
//! six orientation channels, block-averaged to a coarse lookup grid.
//!
//! Every transform is local and border-replicating, so computing the stack
//! once for a whole image gives the same values a per-window computation
//! would give away from the image border.

use std::sync::OnceLock;

use image::RgbImage;

use crate::error::{Error, Result};
use crate::raster::{ChannelStack, Raster};
use crate::scalar::Real;

/// Number of orientation bins over `[0, pi)`.
pub const ORIENTATION_BINS: usize = 6;
/// Default aggregation block (the stack shrink factor).
pub const SHRINK: usize = 4;
/// Channel order of [`compute_acf`].
pub const ACF_CHANNELS: [&str; 10] = ["L", "U", "V", "M", "O0", "O1", "O2", "O3", "O4", "O5"];

/// Additive constant of the gradient-magnitude normalization.
pub const NORM_CONST: f64 = 0.005;
/// Radius of the triangle filter used as the normalization neighbourhood (11 taps).
pub const NORM_RADIUS: usize = 5;

// D65 reference white and the sRGB -> XYZ matrix.
const WHITE: [f64; 3] = [0.950_47, 1.0, 1.088_83];
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];
// Fixed u*, v* ranges that cover the sRGB gamut; used to rescale into [0,1].
const U_MIN: f64 = -134.0;
const U_RANGE: f64 = 354.0;
const V_MIN: f64 = -140.0;
const V_RANGE: f64 = 262.0;

#[inline]
fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// CIE L*u*v* (D65) of an sRGB triple in `[0,1]`, rescaled to `[0,1]` per channel.
pub fn luv_from_srgb(rgb: [f64; 3]) -> [f64; 3] {
    luv_from_linear(rgb.map(srgb_to_linear))
}

fn luv_from_linear(lin: [f64; 3]) -> [f64; 3] {
    let [x, y, z] = RGB_TO_XYZ.map(|row| row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2]);

    let yr = y / WHITE[1];
    let eps = (6.0f64 / 29.0).powi(3);
    let l = if yr > eps {
        116.0 * yr.cbrt() - 16.0
    } else {
        (29.0f64 / 3.0).powi(3) * yr
    };

    let dn = WHITE[0] + 15.0 * WHITE[1] + 3.0 * WHITE[2];
    let (un, vn) = (4.0 * WHITE[0] / dn, 9.0 * WHITE[1] / dn);
    let d = x + 15.0 * y + 3.0 * z;
    let (u, v) = if d > 0.0 {
        (13.0 * l * (4.0 * x / d - un), 13.0 * l * (9.0 * y / d - vn))
    } else {
        (0.0, 0.0)
    };

    [l / 100.0, (u - U_MIN) / U_RANGE, (v - V_MIN) / V_RANGE]
}

fn check_dims(image: &RgbImage) -> Result<()> {
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::invalid("image has zero width or height"));
    }
    Ok(())
}

/// Levels of a `[1,2,1] x [1,2,1]` smoothed 8-bit plane: sums up to 16 * 255.
const SMOOTHED_LEVELS: usize = 16 * 255 + 1;

fn linear_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..SMOOTHED_LEVELS)
            .map(|k| srgb_to_linear(k as f64 / (SMOOTHED_LEVELS - 1) as f64))
            .collect()
    })
}

/// Binomial smoothing of one 8-bit plane, kept as exact integer sums.
fn smooth_plane_u8(image: &RgbImage, c: usize) -> Vec<u16> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let raw = image.as_raw();
    let at = |x: usize, y: usize| u16::from(raw[(y * w + x) * 3 + c]);
    let mut horiz = vec![0u16; w * h];
    for y in 0..h {
        for x in 0..w {
            let l = at(x.saturating_sub(1), y);
            let r = at((x + 1).min(w - 1), y);
            horiz[y * w + x] = l + 2 * at(x, y) + r;
        }
    }
    let mut out = vec![0u16; w * h];
    for y in 0..h {
        let up = &horiz[y.saturating_sub(1) * w..][..w];
        let mid = &horiz[y * w..][..w];
        let down = &horiz[(y + 1).min(h - 1) * w..][..w];
        for x in 0..w {
            out[y * w + x] = up[x] + 2 * mid[x] + down[x];
        }
    }
    out
}

fn smoothed_luv<T: Real>(image: &RgbImage) -> ChannelStack<T> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let table = linear_table();
    let planes: [Vec<u16>; 3] = std::array::from_fn(|c| smooth_plane_u8(image, c));
    let mut out = [
        Vec::with_capacity(w * h),
        Vec::with_capacity(w * h),
        Vec::with_capacity(w * h),
    ];
    for i in 0..w * h {
        let lin = [0, 1, 2].map(|c| table[planes[c][i] as usize]);
        for (plane, v) in out.iter_mut().zip(luv_from_linear(lin)) {
            plane.push(T::lit(v));
        }
    }
    let channels = ["L", "U", "V"]
        .into_iter()
        .zip(out)
        .map(|(n, p)| (n.to_string(), Raster::from_vec(w, h, p).unwrap()))
        .collect();
    ChannelStack::from_rasters(1, channels).unwrap()
}

fn luv_stack<T: Real>(image: &RgbImage) -> ChannelStack<T> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let mut planes = [
        Vec::with_capacity(w * h),
        Vec::with_capacity(w * h),
        Vec::with_capacity(w * h),
    ];
    let table = linear_table();
    for p in image.pixels() {
        let luv = luv_from_linear(p.0.map(|v| table[usize::from(v) * 16]));
        for (plane, v) in planes.iter_mut().zip(luv) {
            plane.push(T::lit(v));
        }
    }
    let channels = ["L", "U", "V"]
        .into_iter()
        .zip(planes)
        .map(|(n, p)| (n.to_string(), Raster::from_vec(w, h, p).unwrap()))
        .collect();
    ChannelStack::from_rasters(1, channels).unwrap()
}

/// Converts an 8-bit sRGB image to a 3-channel rescaled LUV stack.
pub fn rgb_to_luv<T: Real>(image: &RgbImage) -> Result<ChannelStack<T>> {
    check_dims(image)?;
    Ok(luv_stack(image))
}

/// Separable binomial `[1,2,1]/4` filter with edge replication.
pub fn smooth<T: Real>(channel: &Raster<T>) -> Raster<T> {
    convolve_separable(channel, &[T::lit(0.25), T::lit(0.5), T::lit(0.25)])
}

/// Separable triangle filter of the given radius (`2r+1` taps), edge replicating.
pub fn triangle_smooth<T: Real>(channel: &Raster<T>, radius: usize) -> Raster<T> {
    let r = radius as isize;
    let norm = ((radius + 1) * (radius + 1)) as f64;
    let taps: Vec<T> = (-r..=r)
        .map(|i| T::lit((r + 1 - i.abs()) as f64 / norm))
        .collect();
    convolve_separable(channel, &taps)
}

fn convolve_separable<T: Real>(src: &Raster<T>, taps: &[T]) -> Raster<T> {
    let (w, h) = (src.width(), src.height());
    let r = taps.len() / 2;
    let s = src.as_slice();
    let mut horiz = vec![T::zero(); w * h];
    let mut line = vec![T::zero(); w + 2 * r];
    for y in 0..h {
        let row = &s[y * w..(y + 1) * w];
        for (i, v) in line.iter_mut().enumerate() {
            *v = row[i.saturating_sub(r).min(w - 1)];
        }
        for (x, out) in horiz[y * w..(y + 1) * w].iter_mut().enumerate() {
            let mut acc = T::zero();
            for (&t, &v) in taps.iter().zip(&line[x..]) {
                acc += t * v;
            }
            *out = acc;
        }
    }
    let mut out = vec![T::zero(); w * h];
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        for (k, &t) in taps.iter().enumerate() {
            let sy = (y + k).saturating_sub(r).min(h - 1);
            for (d, &v) in dst.iter_mut().zip(&horiz[sy * w..(sy + 1) * w]) {
                *d += t * v;
            }
        }
    }
    Raster::from_vec(w, h, out).unwrap()
}

/// Centered first differences `(I(x+1) - I(x-1)) / 2` with edge replication.
pub fn centered_gradients<T: Real>(channel: &Raster<T>) -> (Raster<T>, Raster<T>) {
    let half = T::lit(0.5);
    let gx = Raster::from_fn(channel.width(), channel.height(), |x, y| {
        let (x, y) = (x as isize, y as isize);
        (channel.get_clamped(x + 1, y) - channel.get_clamped(x - 1, y)) * half
    });
    let gy = Raster::from_fn(channel.width(), channel.height(), |x, y| {
        let (x, y) = (x as isize, y as isize);
        (channel.get_clamped(x, y + 1) - channel.get_clamped(x, y - 1)) * half
    });
    (gx, gy)
}

/// Per-pixel gradient magnitude and quantized orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField<T> {
    pub magnitude: Raster<T>,
    /// Orientation bin in `[0, 6)`; 0 where the magnitude is 0.
    pub orientation_bin: Raster<u8>,
}

/// Orientation bin of a gradient, folding the angle into `[0, pi)`.
///
/// The angle is compared against the bin boundaries `k pi / 6` with cross
/// products instead of evaluating `atan2`.
pub fn orientation_bin<T: Real>(gx: T, gy: T) -> u8 {
    let (x, y) = if gy < T::zero() || (gy == T::zero() && gx < T::zero()) {
        (-gx, -gy)
    } else {
        (gx, gy)
    };
    let mut bin = 0u8;
    for k in 1..ORIENTATION_BINS {
        let (s, c) = (std::f64::consts::PI * k as f64 / ORIENTATION_BINS as f64).sin_cos();
        if y * T::lit(c) - x * T::lit(s) >= T::zero() {
            bin += 1;
        }
    }
    bin
}

/// Maximum gradient response over the three LUV channels.
///
/// The orientation comes from the channel achieving the maximum; ties go to
/// the lowest channel index.
pub fn gradient_field<T: Real>(luv: &ChannelStack<T>) -> Result<GradientField<T>> {
    if luv.num_channels() != 3 {
        return Err(Error::invalid(format!(
            "gradient field expects 3 channels, got {}",
            luv.num_channels()
        )));
    }
    let (w, h) = (luv.width(), luv.height());
    let half = T::lit(0.5);
    let mut magnitude = vec![T::zero(); w * h];
    let mut orientation = vec![0u8; w * h];
    for y in 0..h {
        let (up, down) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (left, right) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let mut best = (T::zero(), T::zero(), T::zero());
            for c in 0..3 {
                let p = luv.channel(c);
                let dx = (p[y * w + right] - p[y * w + left]) * half;
                let dy = (p[down * w + x] - p[up * w + x]) * half;
                let m2 = dx * dx + dy * dy;
                if m2 > best.0 {
                    best = (m2, dx, dy);
                }
            }
            if best.0 > T::zero() {
                magnitude[y * w + x] = best.0.sqrt();
                orientation[y * w + x] = orientation_bin(best.1, best.2);
            }
        }
    }
    Ok(GradientField {
        magnitude: Raster::from_vec(w, h, magnitude).unwrap(),
        orientation_bin: Raster::from_vec(w, h, orientation).unwrap(),
    })
}

/// `M / (triangle-smoothed M + 0.005)`, orientation unchanged.
pub fn normalize_magnitude<T: Real>(field: &GradientField<T>) -> GradientField<T> {
    let local = triangle_smooth(&field.magnitude, NORM_RADIUS);
    let c = T::lit(NORM_CONST);
    let data = field
        .magnitude
        .as_slice()
        .iter()
        .zip(local.as_slice())
        .map(|(&m, &s)| m / (s + c))
        .collect();
    GradientField {
        magnitude: Raster::from_vec(field.magnitude.width(), field.magnitude.height(), data)
            .unwrap(),
        orientation_bin: field.orientation_bin.clone(),
    }
}

/// Splits the magnitude into six channels by orientation bin.
pub fn orientation_histogram<T: Real>(field: &GradientField<T>) -> ChannelStack<T> {
    let (w, h) = (field.magnitude.width(), field.magnitude.height());
    let mut planes = vec![vec![T::zero(); w * h]; ORIENTATION_BINS];
    for (i, (&m, &b)) in field
        .magnitude
        .as_slice()
        .iter()
        .zip(field.orientation_bin.as_slice())
        .enumerate()
    {
        planes[b as usize][i] = m;
    }
    let channels = planes
        .into_iter()
        .enumerate()
        .map(|(bin, p)| (format!("O{bin}"), Raster::from_vec(w, h, p).unwrap()))
        .collect();
    ChannelStack::from_rasters(1, channels).unwrap()
}

/// Block-mean of one raster; partial border blocks are padded by replication.
pub fn aggregate_raster<T: Real>(src: &Raster<T>, block: usize) -> Raster<T> {
    let (w, h) = (src.width().div_ceil(block), src.height().div_ceil(block));
    let norm = T::from_usize_lossy(block * block);
    let (sw, sh) = (src.width(), src.height());
    let s = src.as_slice();
    let mut out = Vec::with_capacity(w * h);
    for cy in 0..h {
        for cx in 0..w {
            let mut sum = T::zero();
            for dy in 0..block {
                let row = &s[(cy * block + dy).min(sh - 1) * sw..][..sw];
                for dx in 0..block {
                    sum += row[(cx * block + dx).min(sw - 1)];
                }
            }
            out.push(sum / norm);
        }
    }
    Raster::from_vec(w, h, out).unwrap()
}

/// Block-mean of every channel; the output shrink is `input shrink * block`.
pub fn aggregate<T: Real>(stack: &ChannelStack<T>, block: usize) -> ChannelStack<T> {
    let channels = stack
        .names()
        .iter()
        .cloned()
        .zip(stack.rasters().map(|r| aggregate_raster(&r, block)))
        .collect();
    ChannelStack::from_rasters(stack.shrink() * block, channels).unwrap()
}

/// ACF stack plus the smoothed full-resolution lightness it was built from.
#[derive(Debug, Clone)]
pub struct AcfOutput<T> {
    pub stack: ChannelStack<T>,
    pub luminance: Raster<T>,
}

/// Smooth -> LUV -> gradients -> histogram -> aggregate -> smooth.
pub fn compute_acf_with_luminance<T: Real>(image: &RgbImage) -> Result<AcfOutput<T>> {
    check_dims(image)?;
    let luv: ChannelStack<T> = smoothed_luv(image);
    let grad = normalize_magnitude(&gradient_field(&luv)?);
    let hist = orientation_histogram(&grad);

    let mut full = luv.clone();
    full.push("M", grad.magnitude)?;
    full.append(hist)?;
    let stack = aggregate(&full, SHRINK).map_channels(smooth)?;
    Ok(AcfOutput {
        stack,
        luminance: luv.channel_raster(0),
    })
}

/// The 10 aggregated channels `L,U,V,M,O0..O5` at shrink 4.
pub fn compute_acf<T: Real>(image: &RgbImage) -> Result<ChannelStack<T>> {
    compute_acf_with_luminance(image).map(|o| o.stack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn uniform(w: u32, h: u32, c: [u8; 3]) -> RgbImage {
        RgbImage::from_pixel(w, h, Rgb(c))
    }

    #[test]
    fn black_and_white_lightness() {
        let black = rgb_to_luv::<f64>(&uniform(3, 2, [0, 0, 0])).unwrap();
        assert!(black.channel(0).iter().all(|&v| v == 0.0));
        let white = rgb_to_luv::<f64>(&uniform(3, 2, [255, 255, 255])).unwrap();
        assert!(white.channel(0).iter().all(|&v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn zero_sized_image_is_rejected() {
        assert!(rgb_to_luv::<f32>(&RgbImage::new(0, 4)).is_err());
        assert!(compute_acf::<f32>(&RgbImage::new(4, 0)).is_err());
    }

    #[test]
    fn smoothing_keeps_constants_and_ramps() {
        let c = Raster::filled(6, 5, 3.5f64);
        assert_eq!(smooth(&c), c);
        let ramp = Raster::from_fn(8, 8, |x, y| 2.0 * x as f64 - y as f64);
        let s = smooth(&ramp);
        for y in 1..7 {
            for x in 1..7 {
                assert!((s.get(x, y) - ramp.get(x, y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn impulse_response_is_binomial_kernel() {
        let mut r = Raster::filled(5, 5, 0.0f64);
        r.set(2, 2, 1.0);
        let s = smooth(&r);
        let k = [0.25, 0.5, 0.25];
        for y in 0..5 {
            for x in 0..5 {
                let expected = if (1..=3).contains(&x) && (1..=3).contains(&y) {
                    k[x - 1] * k[y - 1]
                } else {
                    0.0
                };
                assert_eq!(s.get(x, y), expected);
            }
        }
    }

    #[test]
    fn histogram_indicator() {
        let field = GradientField {
            magnitude: Raster::from_vec(2, 1, vec![2.0f64, 0.0]).unwrap(),
            orientation_bin: Raster::from_vec(2, 1, vec![3u8, 0]).unwrap(),
        };
        let hist = orientation_histogram(&field);
        for b in 0..6 {
            assert_eq!(hist.get(b, 0, 0), if b == 3 { 2.0 } else { 0.0 });
            assert_eq!(hist.get(b, 1, 0), 0.0);
        }
    }

    #[test]
    fn aggregate_means() {
        let ones = ChannelStack::from_rasters(1, vec![("a".into(), Raster::filled(8, 8, 1.0f64))])
            .unwrap();
        let agg = aggregate(&ones, 4);
        assert_eq!((agg.width(), agg.height(), agg.shrink()), (2, 2, 4));
        assert!(agg.channel(0).iter().all(|&v| v == 1.0));

        let mut spike = Raster::filled(4, 4, 0.0f64);
        spike.set(1, 2, 16.0);
        assert_eq!(aggregate_raster(&spike, 4).get(0, 0), 1.0);
    }

    #[test]
    fn orientation_bins_fold_half_plane() {
        assert_eq!(orientation_bin(1.0f64, 0.0), 0);
        assert_eq!(orientation_bin(-1.0f64, 0.0), 0);
        assert_eq!(orientation_bin(0.0f64, 1.0), 3);
        assert_eq!(orientation_bin(0.0f64, -1.0), 3);
        assert_eq!(orientation_bin(1.0f64, 1.0), 1);
        assert_eq!(orientation_bin(-1.0f64, 1.0), 4);
    }

    #[test]
    fn constant_gray_has_no_gradient_channels() {
        let acf = compute_acf::<f32>(&uniform(17, 9, [120, 120, 120])).unwrap();
        assert_eq!(acf.num_channels(), 10);
        assert_eq!((acf.width(), acf.height()), (5, 3));
        for c in 3..10 {
            assert!(acf.channel(c).iter().all(|&v| v == 0.0));
        }
    }
}
