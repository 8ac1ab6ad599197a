//! Single- and multi-channel real rasters.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major single-channel raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy> Raster<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "raster data has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Raster {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Raster {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Raster {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    /// Reads with edge replication for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Ordered stack of equally sized channels, stored channel-major.
///
/// `shrink` is the factor between source-image pixels and stack cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStack<T> {
    width: usize,
    height: usize,
    shrink: usize,
    names: Vec<String>,
    data: Vec<T>,
}

impl<T: Real> ChannelStack<T> {
    pub fn new(width: usize, height: usize, shrink: usize) -> Self {
        ChannelStack {
            width,
            height,
            shrink,
            names: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Builds a stack from named rasters; every raster must share dimensions.
    pub fn from_rasters(shrink: usize, channels: Vec<(String, Raster<T>)>) -> Result<Self> {
        let (width, height) = match channels.first() {
            Some((_, r)) => (r.width(), r.height()),
            None => return Err(Error::invalid("channel stack needs at least one channel")),
        };
        let mut stack = ChannelStack::new(width, height, shrink);
        for (name, raster) in channels {
            stack.push(name, raster)?;
        }
        Ok(stack)
    }

    pub fn push(&mut self, name: impl Into<String>, raster: Raster<T>) -> Result<()> {
        if raster.width() != self.width || raster.height() != self.height {
            return Err(Error::invalid(format!(
                "channel is {}x{}, stack is {}x{}",
                raster.width(),
                raster.height(),
                self.width,
                self.height
            )));
        }
        self.names.push(name.into());
        self.data.extend_from_slice(raster.as_slice());
        Ok(())
    }

    /// Appends every channel of `other` after the channels of `self`.
    pub fn append(&mut self, other: ChannelStack<T>) -> Result<()> {
        if other.width != self.width || other.height != self.height || other.shrink != self.shrink {
            return Err(Error::invalid("appended stack geometry differs"));
        }
        self.names.extend(other.names);
        self.data.extend(other.data);
        Ok(())
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn shrink(&self) -> usize {
        self.shrink
    }

    #[inline]
    pub fn num_channels(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_raster(&self, c: usize) -> Raster<T> {
        Raster::from_vec(self.width, self.height, self.channel(c).to_vec())
            .expect("channel length matches stack dims")
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Flat channel-major buffer; element `(c, x, y)` sits at `(c*h + y)*w + x`.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn rasters(&self) -> impl Iterator<Item = Raster<T>> + '_ {
        (0..self.num_channels()).map(move |c| self.channel_raster(c))
    }

    pub fn map_channels(&self, f: impl Fn(&Raster<T>) -> Raster<T>) -> Result<Self> {
        let channels = self
            .names
            .iter()
            .cloned()
            .zip(self.rasters().map(|r| f(&r)))
            .collect();
        Self::from_rasters(self.shrink, channels)
    }
}
