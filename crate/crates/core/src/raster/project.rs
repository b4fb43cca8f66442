use alloc::vec::Vec;

use super::RasterConfig;
use crate::error::Result;
use crate::float;
use crate::gaussian::GaussianCloud;
use crate::geometry::{Camera, Mat2, Mat3, Vec2, Vec3};

/// A splat after the EWA projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedSplat {
    /// Index into the source cloud.
    pub index: u32,
    pub center: Vec2,
    pub depth: f64,
    /// Screen-space covariance including the low-pass floor (px²).
    pub cov2d: Mat2,
    /// Inverse of `cov2d`.
    pub conic: Mat2,
    pub opacity: f64,
    /// Mahalanobis² radius beyond which alpha is below the skip threshold.
    pub cutoff: f64,
    /// Half-widths of the axis-aligned box around the cutoff ellipse (px).
    pub half_extent: Vec2,
}

impl ProjectedSplat {
    /// Inclusive pixel bounds `(x0, y0, x1, y1)` clipped to the image, or
    /// `None` when the extent misses the image.
    pub fn pixel_bounds(&self, width: u32, height: u32) -> Option<(u32, u32, u32, u32)> {
        let x0 = libm::ceil(self.center.x - self.half_extent.x).max(0.0);
        let y0 = libm::ceil(self.center.y - self.half_extent.y).max(0.0);
        let x1 = libm::floor(self.center.x + self.half_extent.x).min(width as f64 - 1.0);
        let y1 = libm::floor(self.center.y + self.half_extent.y).min(height as f64 - 1.0);
        if x0 > x1 || y0 > y1 || !(x1 >= 0.0 && y1 >= 0.0) {
            return None;
        }
        Some((x0 as u32, y0 as u32, x1 as u32, y1 as u32))
    }
}

/// `Σ₂D = J·W·Σ·Wᵀ·Jᵀ + floor·I` for one splat, or `None` when culled.
pub fn project_splat(
    index: usize,
    mean: Vec3,
    cov3d: &Mat3,
    opacity: f64,
    cam: &Camera,
    cfg: &RasterConfig,
) -> Option<ProjectedSplat> {
    if opacity < cfg.alpha_min {
        return None;
    }
    let x_cam = cam.world_to_camera(mean);
    if !(x_cam.z >= cam.near) {
        return None;
    }
    let j = cam.jacobian_unchecked(x_cam);
    let w = &cam.rotation;
    let cov_cam = *w * *cov3d * w.transpose();
    let mut cov2d = j.sandwich(&cov_cam);
    cov2d.a += cfg.low_pass;
    cov2d.c += cfg.low_pass;
    let conic = cov2d.inverse()?;
    // alpha = o·exp(-q/2) >= alpha_min  <=>  q <= 2 ln(o / alpha_min)
    let cutoff = 2.0 * float::ln(opacity / cfg.alpha_min) * (1.0 + 1e-9) + 1e-9;
    let half_extent = Vec2::new(float::sqrt(cutoff * cov2d.a), float::sqrt(cutoff * cov2d.c));
    let splat = ProjectedSplat {
        index: index as u32,
        center: cam.pixel_of(x_cam),
        depth: x_cam.z,
        cov2d,
        conic,
        opacity,
        cutoff,
        half_extent,
    };
    splat.pixel_bounds(cam.width, cam.height)?;
    Some(splat)
}

/// Projects and culls every splat of `cloud`. Output is in cloud order.
pub fn project_splats(cloud: &GaussianCloud, cam: &Camera, cfg: &RasterConfig) -> Result<Vec<ProjectedSplat>> {
    let mut out = Vec::new();
    for k in 0..cloud.len() {
        let cov = cloud.covariance(k)?;
        if let Some(p) = project_splat(k, cloud.means[k], &cov, cloud.opacity(k), cam, cfg) {
            out.push(p);
        }
    }
    Ok(out)
}
