//! Config-driven commands: cluster, train, detect, evaluate, benchmark.
//!
//! Every command is deterministic for a fixed seed and inputs, whatever the
//! size of the rayon pool it runs in.

mod config;
mod train;

pub use config::{
    AnnotationFormat, ClassConfig, PathField, PathsConfig, PipelineConfig, Preset, PATH_OVERRIDES,
};
pub use train::{
    cmd_train, crop_features, model_file_name, SubcategoryTraining, TrainReport, CROP_CONTEXT,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boosting::{BoostedModel, DecisionTree, Ensemble, WindowGeometry};
use crate::dataset::{
    item_rng, load_csv_annotations, load_kitti_labels, load_rgb, render_crop, AnnotatedSample,
    ClassMap, Jitter, SkipReport,
};
use crate::detect::{
    build_pyramid, detect_all, detect_with_pyramid, read_detections, write_detections,
    ClassDetectors, DetectionRecord, DetectorBank,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_class, pr_points_text, ClassEvaluation, GroundTruth, ImageCase};
use crate::features::{compute_features, FeatureCombination, FeatureLayout};
use crate::scalar::Real;
use crate::subcat::{
    geometric_features, subcategorize, visual_features, GeometricFeature, SubcatParams,
    SubcategoryLayout,
};
use crate::synth::{write_split, SceneParams};
use crate::{channels, subcat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Annotations of one split as configured.
pub fn load_split(
    cfg: &PipelineConfig,
    split: Split,
) -> Result<(Vec<AnnotatedSample>, SkipReport)> {
    let path = match split {
        Split::Train => cfg.paths.train_annotations.clone(),
        Split::Test => cfg
            .paths
            .test_annotations
            .clone()
            .ok_or_else(|| Error::Config("no test annotations configured".into()))?,
    };
    load_annotations(cfg, &path)
}

pub fn load_annotations(
    cfg: &PipelineConfig,
    path: &Path,
) -> Result<(Vec<AnnotatedSample>, SkipReport)> {
    let (samples, skipped) = match cfg.paths.format {
        AnnotationFormat::Csv => {
            let map = cfg
                .paths
                .class_map
                .as_deref()
                .map(ClassMap::load)
                .transpose()?;
            load_csv_annotations(path, map.as_ref(), cfg.paths.csv_header)?
        }
        AnnotationFormat::Kitti => load_kitti_labels(path, &cfg.difficulty)?,
    };
    if !skipped.is_empty() {
        log::warn!(
            "{}: {} annotation lines skipped",
            path.display(),
            skipped.entries.len()
        );
    }
    Ok((samples, skipped))
}

pub fn resolve_image(cfg: &PipelineConfig, id: &str) -> PathBuf {
    let p = Path::new(id);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        cfg.paths.images.join(p)
    }
}

/// SplitMix64 finalizer of `a + b`.
pub(crate) fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a.wrapping_add(b.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of a class, stable across platforms and runs.
pub(crate) fn class_seed(seed: u64, class: &str) -> u64 {
    let fnv = class.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    });
    mix_seed(seed, fnv)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_json<S: Serialize>(value: &S) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Format(e.to_string()))
}

/// Samples of a class together with their subcategory assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutFile {
    pub class: String,
    pub samples: Vec<AnnotatedSample>,
    pub layout: SubcategoryLayout,
}

pub fn layout_path(cfg: &PipelineConfig, class: &str) -> PathBuf {
    cfg.class_dir(class).join("layout.json")
}

pub fn read_layout(cfg: &PipelineConfig, class: &str) -> Result<LayoutFile> {
    let path = layout_path(cfg, class);
    let text = fs::read_to_string(&path).map_err(|_| {
        Error::Config(format!(
            "no subcategory layout for class '{class}' at {}; run the cluster command first",
            path.display()
        ))
    })?;
    let file: LayoutFile = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if file.samples.len() != file.layout.assignments.len() {
        return Err(Error::Format(format!(
            "{}: assignments do not match the samples",
            path.display()
        )));
    }
    Ok(file)
}

#[derive(Debug, Clone)]
pub struct ClusterOutput {
    pub layout: LayoutFile,
    pub report: String,
}

/// Training samples of `class` within its training difficulty, in file order.
pub fn class_samples(cfg: &PipelineConfig, class: &ClassConfig) -> Result<Vec<AnnotatedSample>> {
    let (samples, _) = load_split(cfg, Split::Train)?;
    Ok(samples
        .into_iter()
        .filter(|s| class.labels.contains(&s.class) && s.difficulty.within(class.train_difficulty))
        .collect())
}

/// Clusters the class's training samples and writes `layout.json` and
/// `clusters.txt` under the class directory.
pub fn cmd_cluster(cfg: &PipelineConfig, class_name: &str) -> Result<ClusterOutput> {
    let class = cfg.class(class_name)?;
    let samples = class_samples(cfg, class)?;
    if samples.is_empty() {
        return Err(Error::invalid(format!(
            "no training samples of class '{class_name}'"
        )));
    }
    let geometric: Vec<GeometricFeature> = samples
        .iter()
        .map(|s| GeometricFeature {
            aspect_ratio: s.aspect_ratio(),
            orientation: s.orientation,
            truncation: s.truncation,
            occlusion: s.occlusion,
        })
        .collect();
    let visual = if class.space == subcat::ClusterSpace::Visual {
        Some(visual_rows(cfg, class, &samples, &geometric)?)
    } else {
        None
    };
    let params = SubcatParams {
        k: class.k,
        space: class.space,
        base_height: class.base_height,
        fixed_width: class.window_width,
        padding: class.padding,
        min_cluster_size: class.min_cluster_size,
        restarts: class.restarts,
        seed: class_seed(cfg.seed, class_name),
    };
    let layout = subcategorize(&geometric, visual.as_deref(), &params)?;
    let (_, mask) = geometric_features(&geometric)?;
    let mut report = String::new();
    let _ = writeln!(report, "class {class_name}");
    let _ = writeln!(report, "samples {}", samples.len());
    let _ = writeln!(report, "space {:?}", class.space);
    let _ = writeln!(
        report,
        "geometric columns: aspect{}{}{}",
        if mask.orientation { " orientation" } else { "" },
        if mask.truncation { " truncation" } else { "" },
        if mask.occlusion { " occlusion" } else { "" }
    );
    let _ = writeln!(
        report,
        "requested K {} final K {} merged {}",
        class.k,
        layout.k(),
        layout.merged_clusters
    );
    let _ = writeln!(
        report,
        "# id size median_aspect width height padding footprint"
    );
    for s in &layout.subcategories {
        let (fw, fh) = s.window.footprint();
        let _ = writeln!(
            report,
            "{} {} {:.4} {} {} {} {}x{}",
            s.id,
            s.size,
            s.median_aspect,
            s.window.width,
            s.window.height,
            s.window.padding,
            fw,
            fh
        );
    }
    let file = LayoutFile {
        class: class_name.to_string(),
        samples,
        layout,
    };
    write_text(&layout_path(cfg, class_name), &to_json(&file)?)?;
    write_text(&cfg.class_dir(class_name).join("clusters.txt"), &report)?;
    Ok(ClusterOutput {
        layout: file,
        report,
    })
}

fn visual_rows(
    cfg: &PipelineConfig,
    class: &ClassConfig,
    samples: &[AnnotatedSample],
    geometric: &[GeometricFeature],
) -> Result<Vec<Vec<f64>>> {
    let aspects: Vec<f64> = geometric.iter().map(|g| g.aspect_ratio).collect();
    let aspect = subcat::median(&aspects).unwrap_or(1.0);
    let window = WindowGeometry::new(
        subcat::window_width(class.base_height, aspect),
        class.base_height,
        0,
    )?;
    let mut images: BTreeMap<&str, image::RgbImage> = BTreeMap::new();
    for s in samples {
        if !images.contains_key(s.image.as_str()) {
            images.insert(s.image.as_str(), load_rgb(&resolve_image(cfg, &s.image))?);
        }
    }
    let crops: Vec<_> = samples
        .iter()
        .map(|s| {
            render_crop(
                &images[s.image.as_str()],
                &s.bbox,
                &window,
                0,
                &Jitter::IDENTITY,
            )
        })
        .collect();
    let (fw, fh) = window.footprint();
    visual_features(&crops, fw as u32, fh as u32)
}

/// Loads the detector bank trained for the configured classes.
pub fn load_bank<T: Real>(cfg: &PipelineConfig, model_dir: &Path) -> Result<DetectorBank<T>> {
    let bank = DetectorBank::<T>::load_dir(model_dir, &cfg.nms_thresholds())?;
    if bank.is_empty() {
        return Err(Error::Config(format!(
            "no models in {}",
            model_dir.display()
        )));
    }
    Ok(bank)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectSummary {
    pub images: usize,
    pub detections: usize,
}

/// Runs the bank over every listed image and writes the detection file.
pub fn cmd_detect<T: Real>(
    cfg: &PipelineConfig,
    model_dir: &Path,
    images: &[String],
    output: &Path,
) -> Result<DetectSummary> {
    let records: Vec<DetectionRecord<T>> = if images.is_empty() {
        Vec::new()
    } else {
        let bank = load_bank::<T>(cfg, model_dir)?;
        images
            .par_iter()
            .map(|id| {
                let img = load_rgb(&resolve_image(cfg, id))?;
                Ok(detect_all(&img, &bank, None)?
                    .into_iter()
                    .map(|detection| DetectionRecord {
                        image_id: id.clone(),
                        detection,
                    })
                    .collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect()
    };
    if let Some(dir) = output.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(output).map_err(|e| Error::io(output, e))?;
    let mut w = BufWriter::new(file);
    write_detections(&mut w, &records)?;
    w.flush().map_err(|e| Error::io(output, e))?;
    Ok(DetectSummary {
        images: images.len(),
        detections: records.len(),
    })
}

/// Reads a list of image ids, one per line; blank and `#` lines are skipped.
pub fn read_image_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<ClassEvaluation>,
    pub mean_ap: f64,
    pub mean_auc: f64,
}

impl EvalReport {
    pub fn class(&self, name: &str) -> Option<&ClassEvaluation> {
        self.classes.iter().find(|c| c.class == name)
    }

    pub fn table(&self) -> String {
        let mut s = String::from("# class ground_truth detections tp fp max_recall ap auc\n");
        for c in &self.classes {
            let _ = writeln!(
                s,
                "{} {} {} {} {} {:.4} {:.4} {:.4}",
                c.class,
                c.num_ground_truth,
                c.num_detections,
                c.true_positives,
                c.false_positives,
                c.max_recall,
                c.ap,
                c.auc
            );
        }
        let _ = writeln!(s, "mean {:.4} {:.4}", self.mean_ap, self.mean_auc);
        s
    }
}

/// Scores a detection file against annotations and writes `report.json`,
/// `report.txt` and one `pr_<class>.txt` per class into `out_dir`.
///
/// Classes without counted ground truth are skipped with a warning.
pub fn cmd_eval(
    cfg: &PipelineConfig,
    detections: &Path,
    annotations: &Path,
    out_dir: &Path,
) -> Result<EvalReport> {
    let file = fs::File::open(detections).map_err(|e| Error::io(detections, e))?;
    let dets = read_detections(BufReader::new(file), &detections.display().to_string())?;
    let (gt, _) = load_annotations(cfg, annotations)?;
    let mut classes = Vec::with_capacity(cfg.classes.len());
    for class in &cfg.classes {
        let mut cases: BTreeMap<&str, ImageCase> = BTreeMap::new();
        for s in gt.iter().filter(|s| class.labels.contains(&s.class)) {
            cases
                .entry(&s.image)
                .or_default()
                .ground_truth
                .push(GroundTruth {
                    bbox: s.bbox,
                    ignored: !s.difficulty.within(class.eval_difficulty),
                });
        }
        for r in dets.iter().filter(|r| r.detection.class == class.name) {
            cases
                .entry(&r.image_id)
                .or_default()
                .detections
                .push((r.detection.bbox, r.detection.score));
        }
        let cases: Vec<ImageCase> = cases.into_values().collect();
        if cases
            .iter()
            .all(|c| c.ground_truth.iter().all(|g| g.ignored))
        {
            log::warn!(
                "class '{}' has no counted ground truth in {}; left out of the report",
                class.name,
                annotations.display()
            );
            continue;
        }
        let ev = evaluate_class(&class.name, &cases, class.eval_overlap, class.protocol)?;
        write_text(
            &out_dir.join(format!("pr_{}.txt", class.name)),
            &pr_points_text(&ev.curve),
        )?;
        classes.push(ev);
    }
    if classes.is_empty() {
        return Err(Error::invalid(format!(
            "{} has no counted ground truth for any class",
            annotations.display()
        )));
    }
    let n = classes.len() as f64;
    let report = EvalReport {
        mean_ap: classes.iter().map(|c| c.ap).sum::<f64>() / n,
        mean_auc: classes.iter().map(|c| c.auc).sum::<f64>() / n,
        classes,
    };
    write_text(&out_dir.join("report.json"), &to_json(&report)?)?;
    write_text(&out_dir.join("report.txt"), &report.table())?;
    Ok(report)
}

/// A model of random stumps or trees that never accepts a window, so that
/// every window pays for the full ensemble.
pub fn random_model<T: Real>(
    class: &str,
    window: WindowGeometry,
    combination: FeatureCombination,
    trees: usize,
    depth: usize,
    rng: &mut impl Rng,
) -> Result<BoostedModel<T>> {
    let (cells_w, cells_h) = window.cells();
    let layout = FeatureLayout {
        combination,
        cells_w,
        cells_h,
    };
    let n = layout.num_features();
    let mut ensemble = Ensemble::new();
    for _ in 0..trees {
        let nodes = (1usize << depth) - 1;
        let tree = DecisionTree {
            depth,
            features: (0..nodes).map(|_| rng.random_range(0..n as u32)).collect(),
            thresholds: (0..nodes)
                .map(|_| T::lit(rng.random_range(0.0..0.3)))
                .collect(),
            votes: (0..1usize << depth)
                .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
                .collect(),
        };
        ensemble.push(tree, T::one());
    }
    let mut thresholds = vec![T::neg_infinity(); trees];
    if let Some(last) = thresholds.last_mut() {
        *last = T::max_value();
    }
    ensemble.set_thresholds(thresholds)?;
    let model = BoostedModel {
        class: class.to_string(),
        subcategory: 0,
        window,
        layout,
        shrinkage: 1.0,
        tree_depth: depth,
        ensemble,
        calibration: None,
    };
    model.validate()?;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub combination: FeatureCombination,
    pub channels: usize,
    /// Mean seconds per image.
    pub features_seconds: f64,
    pub detection_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub images: usize,
    pub classes: usize,
    pub trees: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn text(&self) -> String {
        let mut s = format!(
            "# {} images, {} classes, {} trees per model; mean seconds per image\n",
            self.images, self.classes, self.trees
        );
        let _ = writeln!(
            s,
            "{:<12} {:>8} {:>10} {:>10} {:>10}",
            "features", "channels", "extract", "detect", "total"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<12} {:>8} {:>10.4} {:>10.4} {:>10.4}",
                r.combination.to_string(),
                r.channels,
                r.features_seconds,
                r.detection_seconds,
                r.total_seconds
            );
        }
        s
    }

    pub fn json(&self) -> Result<String> {
        to_json(self)
    }
}

/// Times pyramid construction and bank evaluation for every feature
/// combination, with one random model per configured class. The fastest of
/// `repeats` passes is kept.
pub fn cmd_bench<T: Real>(
    cfg: &PipelineConfig,
    images: &[image::RgbImage],
    trees: usize,
    repeats: usize,
) -> Result<BenchTable> {
    if images.is_empty() {
        return Err(Error::invalid("no images to benchmark"));
    }
    let repeats = repeats.max(1);
    let mut rows = Vec::new();
    for combination in FeatureCombination::ALL {
        let mut rng = item_rng(cfg.seed, combination as u64);
        let classes = cfg
            .classes
            .iter()
            .map(|c| {
                let width = c.window_width.unwrap_or(c.base_height);
                let window = WindowGeometry::new(width, c.base_height, c.padding)?;
                Ok(ClassDetectors {
                    name: c.name.clone(),
                    models: vec![random_model::<T>(
                        &c.name,
                        window,
                        combination,
                        trees,
                        2,
                        &mut rng,
                    )?],
                    nms_threshold: c.nms_threshold,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let bank = DetectorBank::new(classes)?;
        let (mut best_f, mut best_d) = (f64::INFINITY, f64::INFINITY);
        for _ in 0..repeats {
            let (mut f, mut d) = (0.0, 0.0);
            for img in images {
                let t0 = Instant::now();
                let pyr = build_pyramid::<T>(img, bank.max_footprint(), combination, None)?;
                let t1 = Instant::now();
                detect_with_pyramid(&pyr, &bank)?;
                f += (t1 - t0).as_secs_f64();
                d += t1.elapsed().as_secs_f64();
            }
            best_f = best_f.min(f);
            best_d = best_d.min(d);
        }
        let n = images.len() as f64;
        rows.push(BenchRow {
            combination,
            channels: combination.num_channels(),
            features_seconds: best_f / n,
            detection_seconds: best_d / n,
            total_seconds: (best_f + best_d) / n,
        });
    }
    Ok(BenchTable {
        images: images.len(),
        classes: cfg.classes.len(),
        trees,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    /// 32-bit float, little endian.
    Pfm,
    /// 8-bit, each channel stretched to its own range.
    Pgm,
}

/// Writes every channel of `combination` for one image as a separate file.
pub fn cmd_channels_dump(
    image: &Path,
    combination: FeatureCombination,
    out_dir: &Path,
    format: RasterFormat,
) -> Result<Vec<PathBuf>> {
    let img = load_rgb(image)?;
    let stack = compute_features::<f32>(&img, combination)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (w, h) = (stack.width(), stack.height());
    let mut written = Vec::with_capacity(stack.num_channels());
    for (c, name) in stack.names().iter().enumerate() {
        let data = stack.channel(c);
        let safe: String = name
            .chars()
            .map(|ch| if ch.is_ascii_alphanumeric() { ch } else { '_' })
            .collect();
        let mut bytes = Vec::new();
        let path = match format {
            RasterFormat::Pfm => {
                bytes.extend_from_slice(format!("Pf\n{w} {h}\n-1.0\n").as_bytes());
                // Rows run bottom to top.
                for y in (0..h).rev() {
                    for v in &data[y * w..(y + 1) * w] {
                        bytes.extend_from_slice(&v.to_le_bytes());
                    }
                }
                out_dir.join(format!("{c:03}_{safe}.pfm"))
            }
            RasterFormat::Pgm => {
                let lo = data.iter().copied().fold(f32::INFINITY, f32::min);
                let hi = data.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                let range = if hi > lo { hi - lo } else { 1.0 };
                bytes.extend_from_slice(format!("P5\n{w} {h}\n255\n").as_bytes());
                bytes.extend(
                    data.iter()
                        .map(|v| ((v - lo) / range * 255.0).round() as u8),
                );
                out_dir.join(format!("{c:03}_{safe}.pgm"))
            }
        };
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    log::info!(
        "{} channels of {}x{} cells (shrink {})",
        written.len(),
        w,
        h,
        channels::SHRINK
    );
    Ok(written)
}

/// Configuration that trains and evaluates the three synthetic shape classes.
pub fn synthetic_config_text(seed: u64) -> String {
    let mut s = format!(
        "seed = {seed}\n\n[paths]\nimages = \"images\"\ntrain_annotations = \"train.csv\"\n\
         test_annotations = \"test.csv\"\nformat = \"csv\"\nwork_dir = \"work\"\n"
    );
    for class in ["disc", "rect", "triangle"] {
        let _ = write!(
            s,
            "\n[classes.{class}]\nk = 2\nspace = \"aspect-only\"\nbase_height = 24\npadding = 4\n\
             features = \"acf\"\nshrinkage = 0.1\ndepth = 2\nschedule = [32, 64, 128, 256]\n\
             hard_negative_cap = 3000\nnegatives_per_image = 20\nnms_threshold = 0.3\neval_overlap = 0.5\n\
             protocol = \"kitti\"\n\n[classes.{class}.jitter]\ncopies = 12\ntranslation = 3.0\n\
             scale = [0.9, 1.1]\nrotation = 0.0\nflip = true\n"
        );
    }
    s
}

/// Writes a synthetic train/test dataset and a matching `config.toml`.
pub fn write_synthetic_dataset(
    dir: &Path,
    train: usize,
    test: usize,
    seed: u64,
) -> Result<PathBuf> {
    let params = SceneParams::default();
    write_split(dir, "train", train, &params, mix_seed(seed, 1))?;
    write_split(dir, "test", test, &params, mix_seed(seed, 2))?;
    let path = dir.join("config.toml");
    write_text(&path, &synthetic_config_text(seed))?;
    Ok(path)
}
