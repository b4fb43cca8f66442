//! Tile-based EWA splat rasterization and its reverse pass.
//!
//! Pipeline: project every splat to a screen-space ellipse, cull, sort all
//! survivors by `(depth, splat index)`, bin them into 16×16 tiles, then
//! composite each pixel front to back. Each tile's list is a subsequence of
//! the global order, so tiling never changes a pixel's result.
//!
//! A splat's screen extent is the ellipse outside of which its alpha is
//! provably below the skip threshold, so the culled/tiled renderer and a
//! brute-force evaluation of every splat at every pixel agree exactly up to
//! floating-point rounding.

mod backward;
mod forward;
mod project;

pub use backward::{backward_rasterize, RenderGrad};
pub use forward::{composite_pixel, rasterize, rasterize_prepared, Prepared};
pub use project::{project_splat, project_splats, ProjectedSplat};

use alloc::vec::Vec;

use crate::geometry::Vec3;

/// Numeric guards of the compositor.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterConfig {
    pub tile_size: u32,
    /// Added to the diagonal of every screen-space covariance (px²).
    pub low_pass: f64,
    /// Per-splat alpha is clamped to at most this value.
    pub alpha_max: f64,
    /// Contributions with alpha below this are skipped.
    pub alpha_min: f64,
    /// Compositing stops once transmittance falls below this.
    pub transmittance_min: f64,
    /// Constant color behind all splats.
    pub background: Vec3,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            tile_size: 16,
            low_pass: 0.3,
            alpha_max: 0.99,
            alpha_min: 1.0 / 255.0,
            transmittance_min: 1e-4,
            background: Vec3::ZERO,
        }
    }
}

/// One-hot class payload: splat `k` contributes to class `labels[k]`.
#[derive(Debug, Clone, Copy)]
pub struct Segmentation<'a> {
    pub labels: &'a [u32],
    pub num_classes: usize,
}

/// Which payloads to composite.
#[derive(Debug, Clone, Copy)]
pub struct Channels<'a> {
    pub color: bool,
    pub features: bool,
    pub segmentation: Option<Segmentation<'a>>,
}

impl<'a> Channels<'a> {
    pub const COLOR: Channels<'static> = Channels { color: true, features: false, segmentation: None };
    pub const ALL_DENSE: Channels<'static> = Channels { color: true, features: true, segmentation: None };

    pub fn segmentation(labels: &'a [u32], num_classes: usize) -> Self {
        Self { color: false, features: false, segmentation: Some(Segmentation { labels, num_classes }) }
    }
}

/// Composited images, all row-major with channels interleaved.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RenderOutput {
    pub width: u32,
    pub height: u32,
    /// `H×W×3` over the background, or empty when not requested.
    pub color: Vec<f64>,
    pub feature_dim: usize,
    /// `H×W×F`, or empty.
    pub features: Vec<f64>,
    pub num_classes: usize,
    /// `H×W×C` soft class scores, or empty.
    pub segmentation: Vec<f64>,
    /// `H×W` accumulated opacity `1 - Π(1 - αₖ)`.
    pub alpha: Vec<f64>,
    /// Number of splats composited at each pixel.
    pub contributors: Vec<u32>,
}

impl RenderOutput {
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Hard labels by argmax over class scores (ties go to the lower class).
    pub fn argmax_labels(&self) -> Vec<u32> {
        let c = self.num_classes;
        if c == 0 {
            return alloc::vec![0; self.pixel_count()];
        }
        self.segmentation
            .chunks_exact(c)
            .map(|s| {
                let mut best = 0;
                for k in 1..c {
                    if s[k] > s[best] {
                        best = k;
                    }
                }
                best as u32
            })
            .collect()
    }
}
