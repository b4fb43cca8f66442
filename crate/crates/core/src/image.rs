//! Dense floating-point images, row-major with interleaved channels.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: u32, height: u32, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width as usize * height as usize * channels {
            return Err(invalid(format!(
                "image data has {} values, expected {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn filled(width: u32, height: u32, channels: usize, value: f64) -> Self {
        Self { width, height, channels, data: vec![value; width as usize * height as usize * channels] }
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn get(&self, x: u32, y: u32, c: usize) -> f64 {
        self.data[(y as usize * self.width as usize + x as usize) * self.channels + c]
    }

    pub fn same_shape(&self, other: &Image) -> Result<()> {
        if self.width != other.width || self.height != other.height || self.channels != other.channels {
            return Err(invalid(format!(
                "image shapes differ: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )));
        }
        Ok(())
    }

    /// Channel `c` as a planar `H×W` buffer.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }
}
