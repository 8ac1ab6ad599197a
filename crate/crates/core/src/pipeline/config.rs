use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boosting::DEFAULT_SCHEDULE;
use crate::dataset::{Difficulty, DifficultyRule, JitterParams};
use crate::error::{Error, Result};
use crate::eval::MatchProtocol;
use crate::features::FeatureCombination;
use crate::subcat::{ClusterSpace, DEFAULT_MIN_CLUSTER_SIZE, DEFAULT_RESTARTS};

/// Environment variables that may replace configured paths.
pub const PATH_OVERRIDES: [(&str, PathField); 4] = [
    ("CHANBOOST_IMAGES", PathField::Images),
    ("CHANBOOST_TRAIN_ANNOTATIONS", PathField::TrainAnnotations),
    ("CHANBOOST_TEST_ANNOTATIONS", PathField::TestAnnotations),
    ("CHANBOOST_WORK_DIR", PathField::WorkDir),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathField {
    Images,
    TrainAnnotations,
    TestAnnotations,
    WorkDir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationFormat {
    /// `image;left;top;right;bottom;class` rows.
    Csv,
    /// A directory of KITTI label files.
    Kitti,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub images: PathBuf,
    pub train_annotations: PathBuf,
    pub test_annotations: Option<PathBuf>,
    #[serde(default = "default_format")]
    pub format: AnnotationFormat,
    pub class_map: Option<PathBuf>,
    #[serde(default)]
    pub csv_header: bool,
    pub work_dir: PathBuf,
}

fn default_format() -> AnnotationFormat {
    AnnotationFormat::Csv
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Generic,
    Sign,
    Car,
    Cyclist,
}

/// Fully resolved settings of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassConfig {
    pub name: String,
    /// Annotation labels that belong to this class.
    pub labels: Vec<String>,
    pub k: usize,
    pub space: ClusterSpace,
    pub base_height: usize,
    pub window_width: Option<usize>,
    pub padding: usize,
    pub min_cluster_size: usize,
    pub restarts: usize,
    pub features: FeatureCombination,
    pub shrinkage: f64,
    pub depth: usize,
    pub schedule: Vec<usize>,
    pub hard_negative_cap: usize,
    /// Random negatives drawn from each training image for the first round.
    pub negatives_per_image: usize,
    pub jitter: JitterParams,
    pub nms_threshold: f64,
    pub eval_overlap: f64,
    pub protocol: MatchProtocol,
    /// Hardest difficulty used for training samples.
    pub train_difficulty: Difficulty,
    /// Ground truth beyond this difficulty is ignored during evaluation.
    pub eval_difficulty: Difficulty,
}

impl ClassConfig {
    pub fn preset(name: &str, preset: Preset) -> Self {
        let mut c = ClassConfig {
            name: name.to_string(),
            labels: vec![name.to_string()],
            k: 1,
            space: ClusterSpace::AspectOnly,
            base_height: 24,
            window_width: None,
            padding: 4,
            min_cluster_size: DEFAULT_MIN_CLUSTER_SIZE,
            restarts: DEFAULT_RESTARTS,
            features: FeatureCombination::Acf,
            shrinkage: 0.1,
            depth: 3,
            schedule: DEFAULT_SCHEDULE.to_vec(),
            hard_negative_cap: 10_000,
            negatives_per_image: 25,
            jitter: JitterParams::none(),
            nms_threshold: 0.5,
            eval_overlap: 0.5,
            protocol: MatchProtocol::Kitti,
            train_difficulty: Difficulty::Hard,
            eval_difficulty: Difficulty::Unrated,
        };
        match preset {
            Preset::Generic => {}
            Preset::Sign => {
                c.base_height = 20;
                c.window_width = Some(20);
                c.padding = 5;
                c.features = FeatureCombination::All;
                c.jitter = JitterParams {
                    copies: 4,
                    translation: 2.0,
                    scale: [0.8, 1.0],
                    rotation: 5.0,
                    flip: true,
                };
                c.eval_overlap = 0.6;
                c.protocol = MatchProtocol::Gtsdb;
            }
            Preset::Car | Preset::Cyclist => {
                let car = preset == Preset::Car;
                c.k = if car { 25 } else { 4 };
                c.space = if car {
                    ClusterSpace::Geometric
                } else {
                    ClusterSpace::AspectOnly
                };
                c.base_height = if car { 52 } else { 56 };
                c.depth = 4;
                c.jitter = JitterParams {
                    copies: 3,
                    translation: 2.0,
                    scale: [1.0, 1.0],
                    rotation: 2.0,
                    flip: car,
                };
                c.eval_overlap = if car { 0.7 } else { 0.5 };
                c.labels = vec![if car { "Car" } else { "Cyclist" }.to_string()];
                c.eval_difficulty = Difficulty::Moderate;
            }
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("class '{}': {m}", self.name)));
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return fail(format!("shrinkage {} outside (0, 1]", self.shrinkage));
        }
        if self.k < 1 {
            return fail("K must be at least 1".into());
        }
        if !(1..=5).contains(&self.depth) {
            return fail(format!("tree depth {} outside 1..5", self.depth));
        }
        if self.schedule.is_empty() || self.schedule.contains(&0) {
            return fail("schedule needs positive learner counts".into());
        }
        if self.schedule.windows(2).any(|w| w[0] >= w[1]) {
            return fail("schedule must increase".into());
        }
        if self.base_height < 8 || self.window_width.is_some_and(|w| w < 8) {
            return fail("window dimensions must be at least 8 px".into());
        }
        if self.restarts == 0 {
            return fail("k-means restarts must be at least 1".into());
        }
        if self.labels.is_empty() {
            return fail("no annotation labels".into());
        }
        for (what, v) in [
            ("NMS threshold", self.nms_threshold),
            ("evaluation overlap", self.eval_overlap),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return fail(format!("{what} {v} outside (0, 1]"));
            }
        }
        self.jitter
            .validate()
            .map_err(|e| Error::Config(format!("class '{}': {e}", self.name)))
    }
}

/// Per-class overrides as written in the file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClass {
    preset: Option<Preset>,
    labels: Option<Vec<String>>,
    k: Option<usize>,
    space: Option<ClusterSpace>,
    base_height: Option<usize>,
    window_width: Option<usize>,
    padding: Option<usize>,
    min_cluster_size: Option<usize>,
    restarts: Option<usize>,
    features: Option<FeatureCombination>,
    shrinkage: Option<f64>,
    depth: Option<usize>,
    schedule: Option<Vec<usize>>,
    hard_negative_cap: Option<usize>,
    negatives_per_image: Option<usize>,
    jitter: Option<JitterParams>,
    nms_threshold: Option<f64>,
    eval_overlap: Option<f64>,
    protocol: Option<MatchProtocol>,
    train_difficulty: Option<String>,
    eval_difficulty: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    paths: PathsConfig,
    #[serde(default)]
    difficulty: Option<DifficultyRule>,
    classes: BTreeMap<String, RawClass>,
}

fn resolve_class(name: &str, raw: RawClass) -> Result<ClassConfig> {
    let mut c = ClassConfig::preset(name, raw.preset.unwrap_or(Preset::Generic));
    macro_rules! take {
        ($($f:ident),*) => { $(if let Some(v) = raw.$f { c.$f = v; })* };
    }
    take!(
        labels,
        k,
        space,
        base_height,
        padding,
        min_cluster_size,
        restarts,
        features,
        shrinkage,
        depth,
        schedule,
        hard_negative_cap,
        negatives_per_image,
        jitter,
        nms_threshold,
        eval_overlap,
        protocol
    );
    if raw.window_width.is_some() {
        c.window_width = raw.window_width;
    }
    let level = |s: &str| {
        s.parse::<Difficulty>()
            .map_err(|e| Error::Config(e.to_string()))
    };
    if let Some(d) = raw.train_difficulty {
        c.train_difficulty = level(&d)?;
    }
    if let Some(d) = raw.eval_difficulty {
        c.eval_difficulty = level(&d)?;
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub difficulty: DifficultyRule,
    /// Classes in name order.
    pub classes: Vec<ClassConfig>,
}

impl PipelineConfig {
    /// Parses a TOML document; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let classes = raw
            .classes
            .into_iter()
            .map(|(name, c)| resolve_class(&name, c))
            .collect::<Result<Vec<_>>>()?;
        let mut paths = raw.paths;
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut paths.images);
        rebase(&mut paths.train_annotations);
        rebase(&mut paths.work_dir);
        if let Some(p) = paths.test_annotations.as_mut() {
            rebase(p);
        }
        if let Some(p) = paths.class_map.as_mut() {
            rebase(p);
        }
        let cfg = PipelineConfig {
            seed: raw.seed,
            paths,
            difficulty: raw.difficulty.unwrap_or_default(),
            classes,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads the file and applies path overrides from the environment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::parse(&text, base)?;
        cfg.apply_overrides(|k| std::env::var_os(k).map(PathBuf::from));
        Ok(cfg)
    }

    pub fn apply_overrides(&mut self, lookup: impl Fn(&str) -> Option<PathBuf>) {
        for (var, field) in PATH_OVERRIDES {
            if let Some(p) = lookup(var) {
                match field {
                    PathField::Images => self.paths.images = p,
                    PathField::TrainAnnotations => self.paths.train_annotations = p,
                    PathField::TestAnnotations => self.paths.test_annotations = Some(p),
                    PathField::WorkDir => self.paths.work_dir = p,
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Config("no classes configured".into()));
        }
        for c in &self.classes {
            c.validate()?;
        }
        Ok(())
    }

    pub fn class(&self, name: &str) -> Result<&ClassConfig> {
        self.classes
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::Config(format!("class '{name}' is not configured")))
    }

    pub fn nms_thresholds(&self) -> BTreeMap<String, f64> {
        self.classes
            .iter()
            .map(|c| (c.name.clone(), c.nms_threshold))
            .collect()
    }

    pub fn class_dir(&self, class: &str) -> PathBuf {
        self.paths.work_dir.join(class)
    }

    pub fn model_dir(&self) -> PathBuf {
        self.paths.work_dir.join("models")
    }
}
