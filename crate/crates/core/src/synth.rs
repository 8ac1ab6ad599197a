//! Synthetic scenes of outlined shapes on cluttered backgrounds, with exact
//! ground-truth boxes.

use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{format_csv_annotations, item_rng, AnnotatedSample, Difficulty};
use crate::detect::{pascal_overlap, BoundingBox};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ShapeKind {
    Disc,
    Triangle,
    TallRect,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Disc, ShapeKind::Triangle, ShapeKind::TallRect];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Disc => "disc",
            ShapeKind::Triangle => "triangle",
            ShapeKind::TallRect => "rect",
        }
    }

    /// Width over height range.
    fn aspect_range(self) -> (f64, f64) {
        match self {
            ShapeKind::Disc => (0.8, 1.2),
            ShapeKind::Triangle => (1.0, 1.3),
            ShapeKind::TallRect => (0.35, 0.65),
        }
    }

    fn base_color(self) -> [f64; 3] {
        match self {
            ShapeKind::Disc => [205.0, 45.0, 40.0],
            ShapeKind::Triangle => [40.0, 70.0, 210.0],
            ShapeKind::TallRect => [35.0, 165.0, 60.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub width: u32,
    pub height: u32,
    pub min_objects: usize,
    pub max_objects: usize,
    pub min_object_height: f64,
    pub max_object_height: f64,
    pub clutter: (usize, usize),
    /// Probability that a scene also holds a pair of overlapping objects of
    /// different classes.
    pub overlap_rate: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            width: 128,
            height: 96,
            min_objects: 2,
            max_objects: 4,
            min_object_height: 24.0,
            max_object_height: 48.0,
            clutter: (4, 10),
            overlap_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacedShape {
    pub kind: ShapeKind,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub image: RgbImage,
    pub objects: Vec<PlacedShape>,
}

const SUPERSAMPLE: usize = 4;

/// Whether `(x, y)` lies on the outline of `shape` with stroke `t`.
fn on_outline(kind: ShapeKind, b: &BoundingBox, t: f64, x: f64, y: f64) -> bool {
    match kind {
        ShapeKind::Disc => {
            let (cx, cy) = b.center();
            let (rx, ry) = (b.width() / 2.0, b.height() / 2.0);
            let outer = ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2) <= 1.0;
            let (ix, iy) = (rx - t, ry - t);
            let inner =
                ix > 0.0 && iy > 0.0 && ((x - cx) / ix).powi(2) + ((y - cy) / iy).powi(2) < 1.0;
            outer && !inner
        }
        ShapeKind::Triangle => {
            let apex = ((b.left + b.right) / 2.0, b.top);
            let bl = (b.left, b.bottom);
            let br = (b.right, b.bottom);
            // Signed distance to each edge, positive inside.
            let edge = |p: (f64, f64), q: (f64, f64)| {
                let (ex, ey) = (q.0 - p.0, q.1 - p.1);
                let len = (ex * ex + ey * ey).sqrt();
                ((x - p.0) * ey - (y - p.1) * ex) / len
            };
            // Vertex order apex, br, bl is counter-clockwise in image
            // coordinates, so the interior has negative cross products.
            let d = [edge(apex, br), edge(br, bl), edge(bl, apex)].map(|v| -v);
            let outer = d.iter().all(|&v| v >= 0.0);
            let inner = d.iter().all(|&v| v > t);
            outer && !inner
        }
        ShapeKind::TallRect => {
            let inside = x >= b.left && x <= b.right && y >= b.top && y <= b.bottom;
            let inner = x > b.left + t && x < b.right - t && y > b.top + t && y < b.bottom - t;
            inside && !inner
        }
    }
}

fn blend(img: &mut RgbImage, x: u32, y: u32, color: [f64; 3], alpha: f64) {
    let p = img.get_pixel_mut(x, y);
    for c in 0..3 {
        let v = f64::from(p.0[c]) * (1.0 - alpha) + color[c] * alpha;
        p.0[c] = v.round().clamp(0.0, 255.0) as u8;
    }
}

/// Draws the anti-aliased outline of a shape.
pub fn draw_shape(img: &mut RgbImage, kind: ShapeKind, bbox: &BoundingBox, color: [f64; 3]) {
    let t = (bbox.height() / 8.0).max(2.0);
    let (w, h) = img.dimensions();
    let x0 = bbox.left.floor().max(0.0) as u32;
    let y0 = bbox.top.floor().max(0.0) as u32;
    let x1 = (bbox.right.ceil() as u32).min(w);
    let y1 = (bbox.bottom.ceil() as u32).min(h);
    let n = SUPERSAMPLE as f64;
    for y in y0..y1 {
        for x in x0..x1 {
            let mut hits = 0usize;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let px = x as f64 + (sx as f64 + 0.5) / n;
                    let py = y as f64 + (sy as f64 + 0.5) / n;
                    if on_outline(kind, bbox, t, px, py) {
                        hits += 1;
                    }
                }
            }
            if hits > 0 {
                blend(img, x, y, color, hits as f64 / (n * n));
            }
        }
    }
}

fn random_color(rng: &mut impl Rng) -> [f64; 3] {
    [
        rng.random_range(0.0..255.0),
        rng.random_range(0.0..255.0),
        rng.random_range(0.0..255.0),
    ]
}

fn shape_color(kind: ShapeKind, rng: &mut impl Rng) -> [f64; 3] {
    kind.base_color()
        .map(|c| (c + rng.random_range(-30.0..30.0)).clamp(0.0, 255.0))
}

fn background(params: &SceneParams, rng: &mut impl Rng) -> RgbImage {
    let top = random_color(rng).map(|c| 0.5 * c + 60.0);
    let bottom = random_color(rng).map(|c| 0.5 * c + 60.0);
    let h = params.height as f64;
    let mut img = RgbImage::from_fn(params.width, params.height, |_, y| {
        let f = y as f64 / h;
        let c: Vec<f64> = (0..3).map(|i| top[i] * (1.0 - f) + bottom[i] * f).collect();
        Rgb([c[0] as u8, c[1] as u8, c[2] as u8])
    });
    for p in img.pixels_mut() {
        for c in p.0.iter_mut() {
            *c = (f64::from(*c) + rng.random_range(-8.0..8.0)).clamp(0.0, 255.0) as u8;
        }
    }
    img
}

fn draw_clutter(img: &mut RgbImage, params: &SceneParams, rng: &mut impl Rng) {
    let count = rng.random_range(params.clutter.0..=params.clutter.1);
    let (w, h) = (params.width as f64, params.height as f64);
    for _ in 0..count {
        let color = if rng.random_bool(0.5) {
            let kind = ShapeKind::ALL[rng.random_range(0..ShapeKind::ALL.len())];
            shape_color(kind, rng)
        } else {
            random_color(rng)
        };
        let size = rng.random_range(4.0..14.0);
        let x = rng.random_range(0.0..w - size);
        let y = rng.random_range(0.0..h - size);
        match rng.random_range(0..3) {
            0 => {
                // Filled patch.
                for yy in y as u32..(y + size) as u32 {
                    for xx in x as u32..(x + size * rng.random_range(0.5..1.5)).min(w - 1.0) as u32
                    {
                        blend(img, xx, yy, color, 1.0);
                    }
                }
            }
            1 => {
                // Straight stroke.
                let len = rng.random_range(10.0..30.0);
                let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
                let steps = (len * 2.0) as usize;
                for s in 0..steps {
                    let f = s as f64 / 2.0;
                    let px = x + f * angle.cos();
                    let py = y + f * angle.sin();
                    if px >= 0.0 && py >= 0.0 && px < w - 1.0 && py < h - 1.0 {
                        blend(img, px as u32, py as u32, color, 1.0);
                        blend(img, px as u32 + 1, py as u32, color, 0.5);
                    }
                }
            }
            _ => {
                // Small blob.
                let r = size / 2.0;
                for yy in y as u32..(y + size) as u32 {
                    for xx in x as u32..(x + size) as u32 {
                        let dx = xx as f64 + 0.5 - (x + r);
                        let dy = yy as f64 + 0.5 - (y + r);
                        if dx * dx + dy * dy <= r * r {
                            blend(img, xx, yy, color, 1.0);
                        }
                    }
                }
            }
        }
    }
}

fn random_box(kind: ShapeKind, params: &SceneParams, rng: &mut impl Rng) -> Option<BoundingBox> {
    let h = rng.random_range(params.min_object_height..=params.max_object_height);
    let (lo, hi) = kind.aspect_range();
    let w = h * rng.random_range(lo..=hi);
    let (iw, ih) = (params.width as f64, params.height as f64);
    if w > iw - 2.0 || h > ih - 2.0 {
        return None;
    }
    let left = rng.random_range(1.0..=iw - w - 1.0).round();
    let top = rng.random_range(1.0..=ih - h - 1.0).round();
    Some(BoundingBox {
        left,
        top,
        right: left + w.round(),
        bottom: top + h.round(),
    })
}

fn overlapping_pair(params: &SceneParams, rng: &mut impl Rng) -> Option<[PlacedShape; 2]> {
    let a = ShapeKind::ALL[rng.random_range(0..3)];
    let b = ShapeKind::ALL[(a as usize + rng.random_range(1..3)) % 3];
    let first = random_box(a, params, rng)?;
    let h = (first.height() * rng.random_range(0.8..=1.1))
        .round()
        .clamp(params.min_object_height, params.max_object_height);
    let (lo, hi) = b.aspect_range();
    let w = h * rng.random_range(lo..=hi);
    let cx = (first.left + first.right) / 2.0 + first.width() * rng.random_range(-0.25..=0.25);
    let cy = (first.top + first.bottom) / 2.0 + first.height() * rng.random_range(-0.15..=0.15);
    let second = BoundingBox {
        left: (cx - w / 2.0).round(),
        top: (cy - h / 2.0).round(),
        right: (cx + w / 2.0).round(),
        bottom: (cy + h / 2.0).round(),
    };
    let inside = second.left >= 1.0
        && second.top >= 1.0
        && second.right <= params.width as f64 - 1.0
        && second.bottom <= params.height as f64 - 1.0;
    inside.then_some([
        PlacedShape {
            kind: a,
            bbox: first,
        },
        PlacedShape {
            kind: b,
            bbox: second,
        },
    ])
}

/// Renders one scene with objects of random classes. Objects do not overlap
/// except for an occasional pair of different classes.
pub fn render_scene(params: &SceneParams, rng: &mut impl Rng) -> Scene {
    let mut image = background(params, rng);
    draw_clutter(&mut image, params, rng);
    let count = rng.random_range(params.min_objects..=params.max_objects);
    let mut objects: Vec<PlacedShape> = Vec::new();
    if rng.random_bool(params.overlap_rate) {
        if let Some(mut pair) = overlapping_pair(params, rng) {
            if rng.random_bool(0.5) {
                pair.reverse();
            }
            objects.extend(pair);
        }
    }
    let mut attempts = 0;
    let count = count.max(objects.len());
    while objects.len() < count && attempts < 200 {
        attempts += 1;
        let kind = ShapeKind::ALL[rng.random_range(0..3)];
        let Some(bbox) = random_box(kind, params, rng) else {
            continue;
        };
        let grown = BoundingBox {
            left: bbox.left - 3.0,
            top: bbox.top - 3.0,
            right: bbox.right + 3.0,
            bottom: bbox.bottom + 3.0,
        };
        if objects
            .iter()
            .any(|o| grown.intersection_area(&o.bbox) > 0.0)
        {
            continue;
        }
        objects.push(PlacedShape { kind, bbox });
    }
    for o in &objects {
        let color = shape_color(o.kind, rng);
        draw_shape(&mut image, o.kind, &o.bbox, color);
    }
    Scene { image, objects }
}

/// A disc and a tall rectangle whose boxes overlap by more than one half.
pub fn render_overlap_scene(params: &SceneParams, rng: &mut impl Rng) -> Scene {
    let mut image = background(params, rng);
    draw_clutter(&mut image, params, rng);
    let h = 44.0;
    let (iw, ih) = (params.width as f64, params.height as f64);
    let left = ((iw - h) / 2.0).round();
    let top = ((ih - h) / 2.0).round();
    let disc = BoundingBox {
        left,
        top,
        right: left + h,
        bottom: top + h,
    };
    let rect = BoundingBox {
        left: left + 8.0,
        top,
        right: left + 36.0,
        bottom: top + h,
    };
    debug_assert!(pascal_overlap(&disc, &rect) > 0.5);
    let objects = vec![
        PlacedShape {
            kind: ShapeKind::Disc,
            bbox: disc,
        },
        PlacedShape {
            kind: ShapeKind::TallRect,
            bbox: rect,
        },
    ];
    for o in &objects {
        let color = shape_color(o.kind, rng);
        draw_shape(&mut image, o.kind, &o.bbox, color);
    }
    Scene { image, objects }
}

/// File names and annotations of a written split.
#[derive(Debug, Clone)]
pub struct WrittenSplit {
    pub images: Vec<String>,
    pub annotations: Vec<AnnotatedSample>,
}

/// Writes `count` scenes as PNG files under `dir/images` and their
/// annotations as `dir/<split>.csv`.
pub fn write_split(
    dir: &Path,
    split: &str,
    count: usize,
    params: &SceneParams,
    seed: u64,
) -> Result<WrittenSplit> {
    let img_dir = dir.join("images");
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let mut images = Vec::with_capacity(count);
    let mut annotations = Vec::new();
    for i in 0..count {
        let mut rng = item_rng(seed, i as u64);
        let scene = render_scene(params, &mut rng);
        let name = format!("{split}_{i:04}.png");
        let path = img_dir.join(&name);
        scene.image.save(&path).map_err(|source| Error::Image {
            path: path.clone(),
            source,
        })?;
        for o in scene.objects {
            annotations.push(AnnotatedSample {
                image: name.clone(),
                bbox: o.bbox,
                class: o.kind.name().to_string(),
                orientation: None,
                truncation: None,
                occlusion: None,
                difficulty: Difficulty::Unrated,
            });
        }
        images.push(name);
    }
    let csv = dir.join(format!("{split}.csv"));
    fs::write(&csv, format_csv_annotations(&annotations)).map_err(|e| Error::io(&csv, e))?;
    let list = dir.join(format!("{split}_images.txt"));
    fs::write(&list, images.join("\n") + "\n").map_err(|e| Error::io(&list, e))?;
    Ok(WrittenSplit {
        images,
        annotations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_reproducible() {
        let p = SceneParams::default();
        let a = render_scene(&p, &mut item_rng(5, 1));
        let b = render_scene(&p, &mut item_rng(5, 1));
        assert_eq!(a.image, b.image);
        assert_eq!(a.objects, b.objects);
        assert!(!a.objects.is_empty());
    }

    #[test]
    fn objects_stay_inside_and_apart() {
        let p = SceneParams::default();
        let mut pairs = 0;
        for i in 0..50 {
            let s = render_scene(&p, &mut item_rng(9, i));
            for (k, o) in s.objects.iter().enumerate() {
                assert!(o.bbox.left >= 0.0 && o.bbox.right <= 128.0);
                assert!(o.bbox.top >= 0.0 && o.bbox.bottom <= 96.0);
                assert!(o.bbox.height() >= 24.0 && o.bbox.height() <= 48.0);
                for (j, q) in s.objects.iter().enumerate().skip(k + 1) {
                    if (k, j) == (0, 1) && o.bbox.intersection_area(&q.bbox) > 0.0 {
                        assert_ne!(o.kind, q.kind);
                        pairs += 1;
                    } else {
                        assert_eq!(o.bbox.intersection_area(&q.bbox), 0.0);
                    }
                }
            }
        }
        assert!(pairs > 0);
    }

    #[test]
    fn overlap_scene_pairs_classes() {
        let s = render_overlap_scene(&SceneParams::default(), &mut item_rng(1, 0));
        assert!(pascal_overlap(&s.objects[0].bbox, &s.objects[1].bbox) > 0.5);
        assert_ne!(s.objects[0].kind, s.objects[1].kind);
    }

    #[test]
    fn outlines_are_hollow() {
        let b = BoundingBox::new(0.0, 0.0, 40.0, 40.0).unwrap();
        for kind in ShapeKind::ALL {
            assert!(
                !on_outline(kind, &b, 5.0, 20.0, 28.0),
                "{kind:?} centre filled"
            );
        }
        assert!(on_outline(ShapeKind::Disc, &b, 5.0, 1.0, 20.0));
        assert!(on_outline(ShapeKind::TallRect, &b, 5.0, 1.0, 20.0));
        assert!(on_outline(ShapeKind::Triangle, &b, 5.0, 20.0, 39.0));
    }
}
