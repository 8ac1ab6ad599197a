//! Feature combinations and window feature layout.

use std::fmt;
use std::str::FromStr;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::channels::{compute_acf_with_luminance, ACF_CHANNELS};
use crate::error::{Error, Result};
use crate::pooled::{sp_cov, sp_lbp, COV_DIM, COV_PATCHES, LBP_BINS};
use crate::raster::ChannelStack;
use crate::scalar::Real;

pub const ACF_LEN: usize = ACF_CHANNELS.len();
pub const SPLBP_LEN: usize = 2 * LBP_BINS;
pub const SPCOV_LEN: usize = COV_PATCHES.len() * COV_DIM;

/// Which channel families are stacked: ACF always, then sp-LBP, then sp-Cov.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureCombination {
    #[serde(rename = "acf")]
    Acf,
    #[serde(rename = "acf+splbp")]
    AcfSpLbp,
    #[serde(rename = "acf+spcov")]
    AcfSpCov,
    #[serde(rename = "all")]
    All,
}

impl FeatureCombination {
    pub const ALL: [FeatureCombination; 4] = [
        FeatureCombination::Acf,
        FeatureCombination::AcfSpLbp,
        FeatureCombination::AcfSpCov,
        FeatureCombination::All,
    ];

    pub fn has_lbp(self) -> bool {
        matches!(self, FeatureCombination::AcfSpLbp | FeatureCombination::All)
    }

    pub fn has_cov(self) -> bool {
        matches!(self, FeatureCombination::AcfSpCov | FeatureCombination::All)
    }

    fn from_flags(lbp: bool, cov: bool) -> Self {
        match (lbp, cov) {
            (false, false) => FeatureCombination::Acf,
            (true, false) => FeatureCombination::AcfSpLbp,
            (false, true) => FeatureCombination::AcfSpCov,
            (true, true) => FeatureCombination::All,
        }
    }

    pub fn union(self, other: Self) -> Self {
        Self::from_flags(
            self.has_lbp() || other.has_lbp(),
            self.has_cov() || other.has_cov(),
        )
    }

    pub fn num_channels(self) -> usize {
        ACF_LEN
            + if self.has_lbp() { SPLBP_LEN } else { 0 }
            + if self.has_cov() { SPCOV_LEN } else { 0 }
    }

    /// Stack channel index, in a stack computed for `stack`, of each channel
    /// of this combination.
    pub fn channel_map(self, stack: FeatureCombination) -> Result<Vec<usize>> {
        if (self.has_lbp() && !stack.has_lbp()) || (self.has_cov() && !stack.has_cov()) {
            return Err(Error::invalid(format!(
                "features {self} are not contained in {stack}"
            )));
        }
        let mut map: Vec<usize> = (0..ACF_LEN).collect();
        let lbp_start = ACF_LEN;
        let cov_start = ACF_LEN + if stack.has_lbp() { SPLBP_LEN } else { 0 };
        if self.has_lbp() {
            map.extend(lbp_start..lbp_start + SPLBP_LEN);
        }
        if self.has_cov() {
            map.extend(cov_start..cov_start + SPCOV_LEN);
        }
        Ok(map)
    }
}

impl fmt::Display for FeatureCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureCombination::Acf => "acf",
            FeatureCombination::AcfSpLbp => "acf+splbp",
            FeatureCombination::AcfSpCov => "acf+spcov",
            FeatureCombination::All => "all",
        })
    }
}

impl FromStr for FeatureCombination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureCombination::ALL
            .into_iter()
            .find(|c| c.to_string() == s)
            .ok_or_else(|| Error::invalid(format!("unknown feature combination '{s}'")))
    }
}

/// Computes every channel of `combination` for a whole image.
pub fn compute_features<T: Real>(
    image: &RgbImage,
    combination: FeatureCombination,
) -> Result<ChannelStack<T>> {
    let acf = compute_acf_with_luminance::<T>(image)?;
    let mut stack = acf.stack;
    if combination.has_lbp() || combination.has_cov() {
        // The pooled families need a 3x3 neighbourhood at least.
        let lum = if acf.luminance.width() < 3 || acf.luminance.height() < 3 {
            return Err(Error::invalid(
                "pooled features need images of at least 3x3 pixels",
            ));
        } else {
            acf.luminance
        };
        if combination.has_lbp() {
            stack.append(sp_lbp(&lum)?)?;
        }
        if combination.has_cov() {
            stack.append(sp_cov(&lum)?.stack)?;
        }
    }
    Ok(stack)
}

/// Window footprint in cells and the channels it reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub combination: FeatureCombination,
    pub cells_w: usize,
    pub cells_h: usize,
}

impl FeatureLayout {
    pub fn num_channels(&self) -> usize {
        self.combination.num_channels()
    }

    pub fn num_features(&self) -> usize {
        self.num_channels() * self.cells_w * self.cells_h
    }

    /// `(channel, dx, dy)` of a flat feature index (channel-major, then row-major).
    pub fn decode(&self, feature: usize) -> (usize, usize, usize) {
        let per_channel = self.cells_w * self.cells_h;
        let c = feature / per_channel;
        let rem = feature % per_channel;
        (c, rem % self.cells_w, rem / self.cells_w)
    }

    /// Offset of each feature relative to the window origin in a stack buffer.
    pub fn stack_offsets<T: Real>(
        &self,
        stack: &ChannelStack<T>,
        stack_combination: FeatureCombination,
    ) -> Result<Vec<usize>> {
        let map = self.combination.channel_map(stack_combination)?;
        if stack.num_channels() != stack_combination.num_channels() {
            return Err(Error::invalid(
                "stack channel count does not match its combination",
            ));
        }
        let plane = stack.width() * stack.height();
        Ok((0..self.num_features())
            .map(|f| {
                let (c, dx, dy) = self.decode(f);
                map[c] * plane + dy * stack.width() + dx
            })
            .collect())
    }

    /// Copies the features of the window whose top-left cell is `(x0, y0)`.
    pub fn extract<T: Real>(
        &self,
        stack: &ChannelStack<T>,
        stack_combination: FeatureCombination,
        x0: usize,
        y0: usize,
    ) -> Result<Vec<T>> {
        if x0 + self.cells_w > stack.width() || y0 + self.cells_h > stack.height() {
            return Err(Error::OutOfBounds {
                region: format!(
                    "window at cell ({x0},{y0}) of {}x{}",
                    self.cells_w, self.cells_h
                ),
                width: stack.width(),
                height: stack.height(),
            });
        }
        let offsets = self.stack_offsets(stack, stack_combination)?;
        let base = y0 * stack.width() + x0;
        let data = stack.as_slice();
        Ok(offsets.iter().map(|&o| data[base + o]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_counts() {
        assert_eq!(FeatureCombination::Acf.num_channels(), 10);
        assert_eq!(FeatureCombination::AcfSpLbp.num_channels(), 126);
        assert_eq!(FeatureCombination::AcfSpCov.num_channels(), 136);
        assert_eq!(FeatureCombination::All.num_channels(), 252);
    }

    #[test]
    fn channel_map_into_union() {
        let m = FeatureCombination::AcfSpCov
            .channel_map(FeatureCombination::All)
            .unwrap();
        assert_eq!(m.len(), 136);
        assert_eq!(m[10], 10 + SPLBP_LEN);
        assert!(FeatureCombination::All
            .channel_map(FeatureCombination::Acf)
            .is_err());
    }

    #[test]
    fn parse_roundtrip() {
        for c in FeatureCombination::ALL {
            assert_eq!(c.to_string().parse::<FeatureCombination>().unwrap(), c);
        }
    }

    #[test]
    fn computed_stack_matches_combination() {
        let img = RgbImage::from_fn(24, 20, |x, y| {
            image::Rgb([(x * 9) as u8, (y * 11) as u8, 40])
        });
        for c in FeatureCombination::ALL {
            let s = compute_features::<f32>(&img, c).unwrap();
            assert_eq!(s.num_channels(), c.num_channels());
            assert_eq!((s.width(), s.height()), (6, 5));
        }
    }
}
