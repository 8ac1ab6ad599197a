//! Multi-class boosted channel-feature object detection.
//!
//! One dense channel pyramid per image feeds a bank of per-class,
//! per-subcategory soft-cascade detectors; raw scores are Platt-calibrated,
//! suppressed within each class and concatenated across classes.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common cases.

pub mod boosting;
pub mod calibrate;
pub mod channels;
pub mod dataset;
pub mod detect;
pub mod error;
pub mod eval;
pub mod features;
pub mod pipeline;
pub mod pooled;
pub mod raster;
pub mod scalar;
pub mod subcat;
pub mod synth;

pub use boosting::{BoostedModel, DecisionTree, Ensemble, FeatureMatrix};
pub use calibrate::CalibrationParams;
pub use detect::{Detection, DetectorBank};
pub use error::{Error, Result};
pub use features::{FeatureCombination, FeatureLayout};
pub use pipeline::PipelineConfig;
pub use raster::{ChannelStack, Raster};
pub use scalar::Real;

pub type ChannelStackF32 = ChannelStack<f32>;
pub type ChannelStackF64 = ChannelStack<f64>;
pub type BoostedModelF32 = BoostedModel<f32>;
pub type BoostedModelF64 = BoostedModel<f64>;
pub type EnsembleF32 = Ensemble<f32>;
pub type EnsembleF64 = Ensemble<f64>;
pub type DetectionF32 = Detection<f32>;
pub type DetectionF64 = Detection<f64>;
pub type DetectorBankF32 = DetectorBank<f32>;
pub type DetectorBankF64 = DetectorBank<f64>;
pub type CalibrationParamsF32 = CalibrationParams<f32>;
pub type CalibrationParamsF64 = CalibrationParams<f64>;
