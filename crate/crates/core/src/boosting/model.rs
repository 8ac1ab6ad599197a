use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::cascade::CascadeOutcome;
use super::tree::DecisionTree;
use super::FeatureAccess;
use crate::calibrate::CalibrationParams;
use crate::channels::SHRINK;
use crate::error::{Error, Result};
use crate::features::FeatureLayout;
use crate::scalar::Real;

pub const MODEL_FORMAT: &str = "multidet-model";
pub const MODEL_VERSION: u32 = 1;

/// Weighted trees with one reject threshold per round (`-inf` disables a round).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Ensemble<T> {
    pub trees: Vec<DecisionTree<T>>,
    pub coefficients: Vec<T>,
    #[serde(
        serialize_with = "serialize_thresholds",
        deserialize_with = "deserialize_thresholds"
    )]
    pub reject_thresholds: Vec<T>,
}

fn serialize_thresholds<T: Real, S: Serializer>(v: &[T], s: S) -> Result<S::Ok, S::Error> {
    let opt: Vec<Option<T>> = v
        .iter()
        .map(|&r| {
            if r == T::neg_infinity() {
                None
            } else {
                Some(r)
            }
        })
        .collect();
    opt.serialize(s)
}

fn deserialize_thresholds<'de, T: Real, D: Deserializer<'de>>(d: D) -> Result<Vec<T>, D::Error> {
    let opt: Vec<Option<T>> = Vec::deserialize(d)?;
    Ok(opt
        .into_iter()
        .map(|r| r.unwrap_or(T::neg_infinity()))
        .collect())
}

impl<T: Real> Default for Ensemble<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Ensemble<T> {
    pub fn new() -> Self {
        Ensemble {
            trees: Vec::new(),
            coefficients: Vec::new(),
            reject_thresholds: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    /// Appends a round with no rejection.
    pub fn push(&mut self, tree: DecisionTree<T>, coefficient: T) {
        self.trees.push(tree);
        self.coefficients.push(coefficient);
        self.reject_thresholds.push(T::neg_infinity());
    }

    pub fn truncate(&mut self, rounds: usize) {
        self.trees.truncate(rounds);
        self.coefficients.truncate(rounds);
        self.reject_thresholds.truncate(rounds);
    }

    pub fn clear_thresholds(&mut self) {
        self.reject_thresholds.fill(T::neg_infinity());
    }

    pub fn set_thresholds(&mut self, thresholds: Vec<T>) -> Result<()> {
        if thresholds.len() != self.len() {
            return Err(Error::invalid(format!(
                "{} thresholds for {} rounds",
                thresholds.len(),
                self.len()
            )));
        }
        self.reject_thresholds = thresholds;
        Ok(())
    }

    /// `sum_t a_t h_t(x)`.
    pub fn score<X: FeatureAccess<T> + ?Sized>(&self, x: &X) -> T {
        let mut h = T::zero();
        for (tree, &a) in self.trees.iter().zip(&self.coefficients) {
            h += a * T::from(tree.predict(x)).unwrap_or_else(T::zero);
        }
        h
    }

    /// Partial sums `H_1, ..., H_T`.
    pub fn trace<X: FeatureAccess<T> + ?Sized>(&self, x: &X) -> Vec<T> {
        let mut h = T::zero();
        self.trees
            .iter()
            .zip(&self.coefficients)
            .map(|(tree, &a)| {
                h += a * T::from(tree.predict(x)).unwrap_or_else(T::zero);
                h
            })
            .collect()
    }

    /// Accumulates rounds and stops at the first `H_t < r_t`.
    #[inline]
    pub fn evaluate<X: FeatureAccess<T> + ?Sized>(&self, x: &X) -> CascadeOutcome<T> {
        let mut h = T::zero();
        for (t, ((tree, &a), &r)) in self
            .trees
            .iter()
            .zip(&self.coefficients)
            .zip(&self.reject_thresholds)
            .enumerate()
        {
            h += a * T::from(tree.predict(x)).unwrap_or_else(T::zero);
            if h < r {
                return CascadeOutcome::Rejected {
                    round: t,
                    partial: h,
                };
            }
        }
        CascadeOutcome::Accepted(h)
    }

    pub fn validate(&self, num_features: usize) -> Result<()> {
        if self.coefficients.len() != self.trees.len()
            || self.reject_thresholds.len() != self.trees.len()
        {
            return Err(Error::Format(
                "tree, coefficient and threshold counts differ".into(),
            ));
        }
        for tree in &self.trees {
            tree.validate(num_features)?;
        }
        if self.coefficients.iter().any(|a| !a.is_finite()) {
            return Err(Error::Format("non-finite coefficient".into()));
        }
        if self
            .reject_thresholds
            .iter()
            .any(|r| r.is_nan() || *r == T::infinity())
        {
            return Err(Error::Format("invalid reject threshold".into()));
        }
        Ok(())
    }
}

/// Object window in pixels plus the context padding around it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowGeometry {
    pub width: usize,
    pub height: usize,
    pub padding: usize,
}

impl WindowGeometry {
    pub fn new(width: usize, height: usize, padding: usize) -> Result<Self> {
        if width < 8 || height < 8 {
            return Err(Error::invalid(format!(
                "window {width}x{height} is below the 8 px minimum"
            )));
        }
        Ok(WindowGeometry {
            width,
            height,
            padding,
        })
    }

    /// Footprint in aggregated cells; the padded window is rounded up to whole cells.
    pub fn cells(&self) -> (usize, usize) {
        (
            (self.width + 2 * self.padding).div_ceil(SHRINK),
            (self.height + 2 * self.padding).div_ceil(SHRINK),
        )
    }

    /// Footprint in pixels.
    pub fn footprint(&self) -> (usize, usize) {
        let (cw, ch) = self.cells();
        (cw * SHRINK, ch * SHRINK)
    }

    /// Pixel offset of the object box inside the footprint.
    pub fn object_offset(&self) -> (f64, f64) {
        let (fw, fh) = self.footprint();
        (
            (fw - self.width) as f64 / 2.0,
            (fh - self.height) as f64 / 2.0,
        )
    }
}

/// One trained sub-detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BoostedModel<T> {
    pub class: String,
    pub subcategory: usize,
    pub window: WindowGeometry,
    pub layout: FeatureLayout,
    pub shrinkage: f64,
    pub tree_depth: usize,
    pub ensemble: Ensemble<T>,
    pub calibration: Option<CalibrationParams<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct ModelDocument<T> {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: BoostedModel<T>,
}

impl<T: Real> BoostedModel<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::Format(format!(
                "shrinkage {} outside (0, 1]",
                self.shrinkage
            )));
        }
        let (cw, ch) = self.window.cells();
        if (cw, ch) != (self.layout.cells_w, self.layout.cells_h) {
            return Err(Error::Format(
                "feature layout does not match the window footprint".into(),
            ));
        }
        self.ensemble.validate(self.layout.num_features())?;
        if let Some(c) = &self.calibration {
            if !(c.a.is_finite() && c.b.is_finite()) {
                return Err(Error::Format("non-finite calibration".into()));
            }
        }
        Ok(())
    }

    pub fn score<X: FeatureAccess<T> + ?Sized>(&self, x: &X) -> Result<T> {
        self.check_access(x)?;
        Ok(self.ensemble.score(x))
    }

    pub fn evaluate<X: FeatureAccess<T> + ?Sized>(&self, x: &X) -> Result<CascadeOutcome<T>> {
        self.check_access(x)?;
        Ok(self.ensemble.evaluate(x))
    }

    fn check_access<X: FeatureAccess<T> + ?Sized>(&self, x: &X) -> Result<()> {
        if x.num_features() != self.layout.num_features() {
            return Err(Error::invalid(format!(
                "sample has {} features, model layout needs {}",
                x.num_features(),
                self.layout.num_features()
            )));
        }
        Ok(())
    }

    /// Calibrated score, or the raw score when no calibration is attached.
    pub fn calibrated(&self, raw: T) -> T {
        match &self.calibration {
            Some(c) => c.calibrate(raw),
            None => raw,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocument {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument<T> =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if doc.format != MODEL_FORMAT {
            return Err(Error::Format(format!("unexpected format '{}'", doc.format)));
        }
        if doc.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported model version {}",
                doc.version
            )));
        }
        doc.model.validate()?;
        Ok(doc.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureCombination;

    fn stump(feature: u32, threshold: f64, left: i8) -> DecisionTree<f64> {
        DecisionTree {
            depth: 1,
            features: vec![feature],
            thresholds: vec![threshold],
            votes: vec![left, -left],
        }
    }

    #[test]
    fn empty_scores_zero() {
        let e = Ensemble::<f64>::new();
        assert_eq!(e.score(&[1.0][..]), 0.0);
    }

    #[test]
    fn single_negative_vote() {
        let mut e = Ensemble::new();
        e.push(stump(0, 0.0, 1), 0.5);
        assert_eq!(e.score(&[1.0][..]), -0.5);
    }

    #[test]
    fn cascade_limits() {
        let mut e = Ensemble::new();
        e.push(stump(0, 0.0, 1), 0.5);
        e.push(stump(0, 2.0, 1), 0.25);
        let x = [1.0][..].to_vec();
        assert_eq!(e.evaluate(&x), CascadeOutcome::Accepted(e.score(&x)));
        e.set_thresholds(vec![f64::INFINITY, f64::NEG_INFINITY])
            .unwrap();
        assert!(matches!(
            e.evaluate(&x),
            CascadeOutcome::Rejected { round: 0, .. }
        ));
    }

    #[test]
    fn padded_sign_window() {
        let w = WindowGeometry::new(20, 20, 5).unwrap();
        assert_eq!(w.cells(), (8, 8));
        assert_eq!(w.object_offset(), (6.0, 6.0));
        assert!(WindowGeometry::new(4, 20, 0).is_err());
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let mut e = Ensemble::new();
        e.push(stump(3, 0.1 + 0.2, -1), 1.0 / 3.0);
        e.push(stump(1, -7.25e-9, 1), std::f64::consts::PI);
        e.set_thresholds(vec![f64::NEG_INFINITY, -0.123456789012345678])
            .unwrap();
        let window = WindowGeometry::new(16, 16, 0).unwrap();
        let model = BoostedModel {
            class: "disc".into(),
            subcategory: 1,
            window,
            layout: FeatureLayout {
                combination: FeatureCombination::Acf,
                cells_w: 4,
                cells_h: 4,
            },
            shrinkage: 0.1,
            tree_depth: 1,
            ensemble: e,
            calibration: Some(CalibrationParams {
                a: -1.2345678901234567,
                b: 0.1,
            }),
        };
        let text = model.to_json().unwrap();
        assert!(text.contains("null"));
        let back = BoostedModel::<f64>::from_json(&text).unwrap();
        assert_eq!(back, model);
        assert!(BoostedModel::<f64>::from_json(&text.replace("multidet-model", "x")).is_err());
    }
}
