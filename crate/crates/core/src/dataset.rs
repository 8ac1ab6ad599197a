//! Annotation loading, difficulty filtering, crop rendering with jitter and
//! negative window sampling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boosting::WindowGeometry;
use crate::detect::{pascal_overlap, BoundingBox};
use crate::error::{Error, Result};

/// Negative windows may overlap any annotation by at most this much.
pub const NEGATIVE_MAX_OVERLAP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
    /// Fails every difficulty level.
    Excluded,
    /// No difficulty information (e.g. CSV annotations).
    Unrated,
}

impl Difficulty {
    /// Whether a sample of this difficulty counts at evaluation `level`.
    pub fn within(self, level: Difficulty) -> bool {
        match (self, level) {
            (Difficulty::Unrated, _) | (_, Difficulty::Unrated) => true,
            (Difficulty::Excluded, _) => false,
            (s, l) => s <= l,
        }
    }
}

impl std::str::FromStr for Difficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "moderate" => Ok(Difficulty::Moderate),
            "hard" => Ok(Difficulty::Hard),
            "all" | "unrated" => Ok(Difficulty::Unrated),
            _ => Err(Error::invalid(format!("unknown difficulty '{s}'"))),
        }
    }
}

/// Per-level limits, indexed easy, moderate, hard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DifficultyRule {
    pub min_height: [f64; 3],
    pub max_occlusion: [u8; 3],
    pub max_truncation: [f64; 3],
}

impl Default for DifficultyRule {
    fn default() -> Self {
        DifficultyRule {
            min_height: [40.0, 25.0, 25.0],
            max_occlusion: [0, 1, 2],
            max_truncation: [0.15, 0.30, 0.50],
        }
    }
}

impl DifficultyRule {
    /// Easiest level whose limits the object satisfies.
    pub fn classify(&self, height: f64, occlusion: u8, truncation: f64) -> Difficulty {
        let levels = [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard];
        for (i, level) in levels.into_iter().enumerate() {
            if height >= self.min_height[i]
                && occlusion <= self.max_occlusion[i]
                && truncation <= self.max_truncation[i]
            {
                return level;
            }
        }
        Difficulty::Excluded
    }
}

/// One annotated object. Optional fields are `None` when the source lacks them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSample {
    /// Image path relative to the dataset's image directory.
    pub image: String,
    pub bbox: BoundingBox,
    pub class: String,
    pub orientation: Option<f64>,
    pub truncation: Option<f64>,
    pub occlusion: Option<u8>,
    pub difficulty: Difficulty,
}

impl AnnotatedSample {
    pub fn aspect_ratio(&self) -> f64 {
        self.bbox.width() / self.bbox.height()
    }
}

/// Lines that were read but not turned into samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SkipReport {
    pub entries: Vec<(PathBuf, usize, String)>,
}

impl SkipReport {
    fn push(&mut self, path: &Path, line: usize, what: impl Into<String>) {
        self.entries.push((path.to_path_buf(), line, what.into()));
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub const KITTI_TYPES: [&str; 9] = [
    "Car",
    "Van",
    "Truck",
    "Pedestrian",
    "Person_sitting",
    "Cyclist",
    "Tram",
    "Misc",
    "DontCare",
];

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parses one KITTI label file (15 space-separated fields per object).
pub fn parse_kitti_file(
    text: &str,
    path: &Path,
    image: &str,
    rule: &DifficultyRule,
    skipped: &mut SkipReport,
) -> Result<Vec<AnnotatedSample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() != 15 && f.len() != 16 {
            return Err(parse_error(
                path,
                n,
                format!("expected 15 fields, found {}", f.len()),
            ));
        }
        if !KITTI_TYPES.contains(&f[0]) {
            skipped.push(path, n, format!("unknown type '{}'", f[0]));
            continue;
        }
        let num = |k: usize| {
            f[k].parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    parse_error(
                        path,
                        n,
                        format!("field {} ('{}') is not a number", k + 1, f[k]),
                    )
                })
        };
        let truncation = num(1)?;
        let occluded =
            f[2].parse::<u8>().ok().filter(|&o| o <= 3).ok_or_else(|| {
                parse_error(path, n, format!("occlusion '{}' not in 0..=3", f[2]))
            })?;
        let alpha = num(3)?;
        let bbox = BoundingBox::new(num(4)?, num(5)?, num(6)?, num(7)?)
            .map_err(|e| parse_error(path, n, e.to_string()))?;
        let truncation = truncation.clamp(0.0, 1.0);
        out.push(AnnotatedSample {
            image: image.to_string(),
            bbox,
            class: f[0].to_string(),
            orientation: Some(alpha),
            truncation: Some(truncation),
            occlusion: Some(occluded),
            difficulty: rule.classify(bbox.height(), occluded, truncation),
        });
    }
    Ok(out)
}

/// Reads every `*.txt` label file in `label_dir`; the image of `NAME.txt` is
/// `NAME.png` under the image directory.
pub fn load_kitti_labels(
    label_dir: &Path,
    rule: &DifficultyRule,
) -> Result<(Vec<AnnotatedSample>, SkipReport)> {
    let mut paths: Vec<PathBuf> = fs::read_dir(label_dir)
        .map_err(|e| Error::io(label_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    let mut skipped = SkipReport::default();
    let mut samples = Vec::new();
    for p in paths {
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        samples.extend(parse_kitti_file(
            &text,
            &p,
            &format!("{stem}.png"),
            rule,
            &mut skipped,
        )?);
    }
    Ok((samples, skipped))
}

/// Class id to class name, read from `id;name` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassMap {
    map: BTreeMap<String, String>,
}

impl ClassMap {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, name) = line
                .split_once(';')
                .ok_or_else(|| parse_error(path, i + 1, "expected 'id;name'"))?;
            map.insert(id.trim().to_string(), name.trim().to_string());
        }
        Ok(ClassMap { map })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn get(&self, id: &str) -> Option<&str> {
        self.map.get(id).map(String::as_str)
    }
}

/// Parses `image;left;top;right;bottom;class` rows. With a class map, ids
/// missing from it are skipped and reported; without one the field is the
/// class name.
pub fn parse_csv_annotations(
    text: &str,
    path: &Path,
    class_map: Option<&ClassMap>,
    has_header: bool,
    skipped: &mut SkipReport,
) -> Result<Vec<AnnotatedSample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if i == 0 && has_header {
            continue;
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(';').map(str::trim).collect();
        if f.len() != 6 {
            return Err(parse_error(
                path,
                n,
                format!("expected 6 fields, found {}", f.len()),
            ));
        }
        let num = |k: usize| {
            f[k].parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_error(path, n, format!("'{}' is not a number", f[k])))
        };
        let bbox = BoundingBox::new(num(1)?, num(2)?, num(3)?, num(4)?)
            .map_err(|e| parse_error(path, n, e.to_string()))?;
        let class = match class_map {
            Some(m) => match m.get(f[5]) {
                Some(name) => name.to_string(),
                None => {
                    skipped.push(path, n, format!("class id '{}' not in the class map", f[5]));
                    continue;
                }
            },
            None => f[5].to_string(),
        };
        out.push(AnnotatedSample {
            image: f[0].to_string(),
            bbox,
            class,
            orientation: None,
            truncation: None,
            occlusion: None,
            difficulty: Difficulty::Unrated,
        });
    }
    Ok(out)
}

pub fn load_csv_annotations(
    path: &Path,
    class_map: Option<&ClassMap>,
    has_header: bool,
) -> Result<(Vec<AnnotatedSample>, SkipReport)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut skipped = SkipReport::default();
    let samples = parse_csv_annotations(&text, path, class_map, has_header, &mut skipped)?;
    Ok((samples, skipped))
}

/// Formats samples as CSV rows with the class name in the last field.
pub fn format_csv_annotations(samples: &[AnnotatedSample]) -> String {
    let mut s = String::new();
    for a in samples {
        let _ = writeln!(
            s,
            "{};{};{};{};{};{}",
            a.image, a.bbox.left, a.bbox.top, a.bbox.right, a.bbox.bottom, a.class
        );
    }
    s
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(img.to_rgb8())
}

/// Geometric perturbation applied when rendering a crop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jitter {
    /// Shift in window pixels.
    pub dx: f64,
    pub dy: f64,
    /// Object size relative to the window.
    pub scale: f64,
    /// Rotation in radians.
    pub angle: f64,
    pub flip: bool,
}

impl Jitter {
    pub const IDENTITY: Jitter = Jitter {
        dx: 0.0,
        dy: 0.0,
        scale: 1.0,
        angle: 0.0,
        flip: false,
    };

    pub fn flipped() -> Self {
        Jitter {
            flip: true,
            ..Self::IDENTITY
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JitterParams {
    /// Crops produced per annotation, the unperturbed one included.
    pub copies: usize,
    /// Maximum absolute shift in window pixels.
    pub translation: f64,
    pub scale: [f64; 2],
    /// Maximum absolute rotation in degrees.
    pub rotation: f64,
    pub flip: bool,
}

impl JitterParams {
    pub fn none() -> Self {
        JitterParams {
            copies: 1,
            translation: 0.0,
            scale: [1.0, 1.0],
            rotation: 0.0,
            flip: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.copies == 0 {
            return Err(Error::Config("jitter copies must be at least 1".into()));
        }
        if !(self.translation >= 0.0 && self.rotation >= 0.0) {
            return Err(Error::Config(
                "jitter magnitudes must be nonnegative".into(),
            ));
        }
        if !(self.scale[0] > 0.0 && self.scale[0] <= self.scale[1]) {
            return Err(Error::Config(
                "jitter scale range must be positive and ordered".into(),
            ));
        }
        Ok(())
    }
}

/// `copies` perturbations: the identity first, then the mirror image when
/// flipping is allowed, then random draws.
pub fn jitter_transforms(params: &JitterParams, rng: &mut impl Rng) -> Vec<Jitter> {
    let mut out = vec![Jitter::IDENTITY];
    if params.flip && params.copies > 1 {
        out.push(Jitter::flipped());
    }
    while out.len() < params.copies {
        let uniform = |rng: &mut dyn rand::RngCore, m: f64| {
            if m > 0.0 {
                rng.random_range(-m..=m)
            } else {
                0.0
            }
        };
        let scale = if params.scale[1] > params.scale[0] {
            rng.random_range(params.scale[0]..=params.scale[1])
        } else {
            params.scale[0]
        };
        out.push(Jitter {
            dx: uniform(rng, params.translation),
            dy: uniform(rng, params.translation),
            scale,
            angle: uniform(rng, params.rotation).to_radians(),
            flip: params.flip && rng.random_bool(0.5),
        });
    }
    out.truncate(params.copies);
    out
}

/// Bilinear sample at continuous pixel coordinates with edge replication.
pub fn sample_bilinear(image: &RgbImage, x: f64, y: f64) -> Rgb<u8> {
    let (w, h) = image.dimensions();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as u32;
    let y0 = y.floor() as u32;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let p = |xx, yy, c: usize| f64::from(image.get_pixel(xx, yy).0[c]);
    let mut out = [0u8; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let top = p(x0, y0, c) * (1.0 - fx) + p(x1, y0, c) * fx;
        let bottom = p(x0, y1, c) * (1.0 - fx) + p(x1, y1, c) * fx;
        *o = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
    }
    Rgb(out)
}

/// Renders the window footprint around `bbox` plus `context` pixels on every
/// side, mapping the box onto the window's object area.
///
/// When the box is larger than the window the crop is rendered at source
/// resolution first and reduced with a triangle filter, as pyramid levels are.
pub fn render_crop(
    image: &RgbImage,
    bbox: &BoundingBox,
    window: &WindowGeometry,
    context: usize,
    jitter: &Jitter,
) -> RgbImage {
    let (fw, fh) = window.footprint();
    let (ox, oy) = window.object_offset();
    let (ww, wh) = (window.width as f64, window.height as f64);
    let (cx, cy) = bbox.center();
    let kx = bbox.width() / ww;
    let ky = bbox.height() / wh;
    let (sin, cos) = jitter.angle.sin_cos();
    let centre_u = context as f64 + ox + ww / 2.0;
    let centre_v = context as f64 + oy + wh / 2.0;
    let out_w = (fw + 2 * context) as u32;
    let out_h = (fh + 2 * context) as u32;
    let fx = (kx / jitter.scale).max(1.0);
    let fy = (ky / jitter.scale).max(1.0);
    let canvas_w = ((out_w as f64 * fx).round() as u32).max(out_w);
    let canvas_h = ((out_h as f64 * fy).round() as u32).max(out_h);
    let step_u = out_w as f64 / canvas_w as f64;
    let step_v = out_h as f64 / canvas_h as f64;
    let canvas = RgbImage::from_fn(canvas_w, canvas_h, |u, v| {
        let mut a = ((u as f64 + 0.5) * step_u - centre_u) / jitter.scale - jitter.dx;
        let b = ((v as f64 + 0.5) * step_v - centre_v) / jitter.scale - jitter.dy;
        if jitter.flip {
            a = -a;
        }
        let (px, py) = (a * kx, b * ky);
        let sx = cx + cos * px - sin * py;
        let sy = cy + sin * px + cos * py;
        sample_bilinear(image, sx - 0.5, sy - 0.5)
    });
    if canvas_w == out_w && canvas_h == out_h {
        canvas
    } else {
        image::imageops::resize(&canvas, out_w, out_h, image::imageops::FilterType::Triangle)
    }
}

/// One crop per perturbation from [`jitter_transforms`].
pub fn jitter(
    image: &RgbImage,
    bbox: &BoundingBox,
    window: &WindowGeometry,
    context: usize,
    params: &JitterParams,
    rng: &mut impl Rng,
) -> Vec<RgbImage> {
    jitter_transforms(params, rng)
        .iter()
        .map(|j| render_crop(image, bbox, window, context, j))
        .collect()
}

/// Deterministic generator for item `index` of a seeded stream.
pub fn item_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativeWindows {
    pub boxes: Vec<BoundingBox>,
    /// Fewer than the requested windows could be placed.
    pub saturated: bool,
}

/// Random object boxes of the window's aspect ratio, at least the window's
/// size, inside the image and overlapping every annotation by at most 0.1.
pub fn sample_negatives(
    image_width: u32,
    image_height: u32,
    annotations: &[BoundingBox],
    count: usize,
    window: (usize, usize),
    rng: &mut impl Rng,
) -> NegativeWindows {
    let (iw, ih) = (image_width as f64, image_height as f64);
    let (ww, wh) = (window.0 as f64, window.1 as f64);
    let max_scale = (iw / ww).min(ih / wh);
    let mut boxes = Vec::with_capacity(count);
    if max_scale >= 1.0 && count > 0 {
        let attempts = count * 100;
        for _ in 0..attempts {
            if boxes.len() == count {
                break;
            }
            let s = if max_scale > 1.0 {
                rng.random_range(0.0..=max_scale.log2()).exp2()
            } else {
                1.0
            };
            let (w, h) = (ww * s, wh * s);
            let left = if iw - w > 0.0 {
                rng.random_range(0.0..=iw - w)
            } else {
                0.0
            };
            let top = if ih - h > 0.0 {
                rng.random_range(0.0..=ih - h)
            } else {
                0.0
            };
            let b = BoundingBox {
                left,
                top,
                right: left + w,
                bottom: top + h,
            };
            if annotations
                .iter()
                .all(|a| pascal_overlap(&b, a) <= NEGATIVE_MAX_OVERLAP)
            {
                boxes.push(b);
            }
        }
    }
    let saturated = boxes.len() < count;
    if saturated {
        log::debug!(
            "negative sampling placed {} of {count} windows",
            boxes.len()
        );
    }
    NegativeWindows { boxes, saturated }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> PathBuf {
        PathBuf::from("mem")
    }

    #[test]
    fn kitti_line_and_difficulty() {
        let text = "Car 0.00 0 -1.57 100.0 120.0 180.0 180.0 1.5 1.6 3.9 1.0 1.8 20.0 -1.5\n\
                    Cyclist 0.40 3 0.2 10 10 30 50 1 1 1 1 1 1 0\n\
                    Alien 0 0 0 1 1 2 2 1 1 1 1 1 1 0\n";
        let mut skipped = SkipReport::default();
        let s = parse_kitti_file(
            text,
            &p(),
            "000001.png",
            &DifficultyRule::default(),
            &mut skipped,
        )
        .unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].difficulty, Difficulty::Easy);
        assert_eq!(s[0].orientation, Some(-1.57));
        assert_eq!(s[1].occlusion, Some(3));
        assert_eq!(s[1].difficulty, Difficulty::Excluded);
        assert_eq!(skipped.entries.len(), 1);
        assert!(
            parse_kitti_file("", &p(), "x", &DifficultyRule::default(), &mut skipped)
                .unwrap()
                .is_empty()
        );
        let err = parse_kitti_file(
            "Car 0 0\n",
            &p(),
            "x",
            &DifficultyRule::default(),
            &mut skipped,
        );
        assert!(matches!(err, Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn difficulty_levels() {
        let r = DifficultyRule::default();
        assert_eq!(r.classify(60.0, 0, 0.0), Difficulty::Easy);
        assert_eq!(r.classify(30.0, 0, 0.0), Difficulty::Moderate);
        assert_eq!(r.classify(30.0, 2, 0.45), Difficulty::Hard);
        assert_eq!(r.classify(20.0, 0, 0.0), Difficulty::Excluded);
        assert!(Difficulty::Easy.within(Difficulty::Moderate));
        assert!(!Difficulty::Hard.within(Difficulty::Moderate));
    }

    #[test]
    fn csv_rows() {
        let mut sk = SkipReport::default();
        let s =
            parse_csv_annotations("a.ppm;1;2;30;40;disc\n", &p(), None, false, &mut sk).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].bbox, BoundingBox::new(1.0, 2.0, 30.0, 40.0).unwrap());
        assert!(parse_csv_annotations("a;5;2;5;40;x\n", &p(), None, false, &mut sk).is_err());
        assert!(parse_csv_annotations("a;5;2;9\n", &p(), None, false, &mut sk).is_err());
        let h = parse_csv_annotations("img;l;t;r;b;c\na;1;2;3;4;x\n", &p(), None, true, &mut sk)
            .unwrap();
        assert_eq!(h.len(), 1);
    }

    #[test]
    fn class_map_skips_unmapped() {
        let m = ClassMap::parse("# id;name\n1;prohibitory\n", &p()).unwrap();
        let mut sk = SkipReport::default();
        let s = parse_csv_annotations(
            "a;1;2;30;40;1\na;1;2;30;40;9\n",
            &p(),
            Some(&m),
            false,
            &mut sk,
        )
        .unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].class, "prohibitory");
        assert_eq!(sk.entries.len(), 1);
    }

    fn gradient_image() -> RgbImage {
        RgbImage::from_fn(64, 48, |x, y| {
            Rgb([(x * 4) as u8, (y * 5) as u8, ((x + y) * 2) as u8])
        })
    }

    #[test]
    fn identity_crop_copies_pixels() {
        let img = gradient_image();
        let w = WindowGeometry::new(16, 16, 0).unwrap();
        let b = BoundingBox::new(8.0, 4.0, 24.0, 20.0).unwrap();
        let c = render_crop(&img, &b, &w, 4, &Jitter::IDENTITY);
        assert_eq!(c.dimensions(), (24, 24));
        for v in 0..24 {
            for u in 0..24 {
                assert_eq!(c.get_pixel(u, v), img.get_pixel(u + 4, v));
            }
        }
    }

    #[test]
    fn flip_is_mirror_and_involution() {
        let img = gradient_image();
        let w = WindowGeometry::new(16, 16, 0).unwrap();
        let b = BoundingBox::new(8.0, 4.0, 24.0, 20.0).unwrap();
        let id = render_crop(&img, &b, &w, 0, &Jitter::IDENTITY);
        let fl = render_crop(&img, &b, &w, 0, &Jitter::flipped());
        assert_eq!(image::imageops::flip_horizontal(&id), fl);
        assert_eq!(image::imageops::flip_horizontal(&fl), id);
    }

    #[test]
    fn jitter_cardinality_and_determinism() {
        let params = JitterParams {
            copies: 5,
            translation: 2.0,
            scale: [0.8, 1.0],
            rotation: 5.0,
            flip: true,
        };
        let a = jitter_transforms(&params, &mut item_rng(7, 0));
        let b = jitter_transforms(&params, &mut item_rng(7, 0));
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        assert_eq!(a[0], Jitter::IDENTITY);
        assert_eq!(a[1], Jitter::flipped());
        let none = jitter_transforms(&JitterParams::none(), &mut item_rng(7, 0));
        assert_eq!(none, vec![Jitter::IDENTITY]);
    }

    #[test]
    fn negatives_respect_annotations() {
        let mut rng = item_rng(3, 0);
        let free = sample_negatives(128, 96, &[], 25, (16, 16), &mut rng);
        assert_eq!(free.boxes.len(), 25);
        assert!(!free.saturated);
        let ann = [BoundingBox::new(10.0, 10.0, 60.0, 60.0).unwrap()];
        let some = sample_negatives(128, 96, &ann, 50, (16, 16), &mut rng);
        for b in &some.boxes {
            assert!(pascal_overlap(b, &ann[0]) <= 0.1);
            assert!(b.left >= 0.0 && b.right <= 128.0 && b.top >= 0.0 && b.bottom <= 96.0);
        }
        let full = [BoundingBox::new(0.0, 0.0, 32.0, 32.0).unwrap()];
        let none = sample_negatives(32, 32, &full, 5, (32, 32), &mut rng);
        assert!(none.boxes.is_empty() && none.saturated);
    }
}
