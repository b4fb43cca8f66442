use alloc::vec;
use alloc::vec::Vec;

use super::cloud::GaussianCloud;
use crate::error::{invalid, Result};
use crate::geometry::{Quat, Vec3};

/// Per-splat packing of the six parameter blocks:
/// `[μ(3), q(4), log_scale(3), opacity_logit(1), color(3), feature(F)]`.
///
/// Residuals, MLP outputs and rasterizer gradients all use this layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub feature_dim: usize,
}

impl ParamLayout {
    pub const MEAN: usize = 0;
    pub const ROTATION: usize = 3;
    pub const LOG_SCALE: usize = 7;
    pub const OPACITY: usize = 10;
    pub const COLOR: usize = 11;
    pub const FEATURE: usize = 14;

    pub const fn new(feature_dim: usize) -> Self {
        Self { feature_dim }
    }

    pub const fn stride(&self) -> usize {
        Self::FEATURE + self.feature_dim
    }

    /// Human-readable name of the block containing offset `i` within a splat.
    pub fn group_of(&self, i: usize) -> &'static str {
        match i {
            0..=2 => "mean",
            3..=6 => "rotation",
            7..=9 => "log_scale",
            10 => "opacity",
            11..=13 => "color",
            _ => "feature",
        }
    }

    /// Packs a cloud's raw parameters.
    pub fn pack(&self, cloud: &GaussianCloud) -> Vec<f64> {
        let stride = self.stride();
        let mut out = vec![0.0; cloud.len() * stride];
        for k in 0..cloud.len() {
            let row = &mut out[k * stride..(k + 1) * stride];
            row[0..3].copy_from_slice(&cloud.means[k].to_array());
            row[3..7].copy_from_slice(&cloud.rotations[k].to_array());
            row[7..10].copy_from_slice(&cloud.log_scales[k].to_array());
            row[10] = cloud.opacity_logits[k];
            row[11..14].copy_from_slice(&cloud.colors[k].to_array());
            row[14..].copy_from_slice(cloud.feature(k));
        }
        out
    }

    /// Inverse of [`ParamLayout::pack`] (quaternions are taken as-is).
    pub fn unpack(&self, data: &[f64]) -> GaussianCloud {
        let stride = self.stride();
        let n = data.len() / stride;
        let mut cloud = GaussianCloud::empty(self.feature_dim);
        for row in data.chunks_exact(stride).take(n) {
            cloud.means.push(Vec3::new(row[0], row[1], row[2]));
            cloud.rotations.push(Quat::new(row[3], row[4], row[5], row[6]));
            cloud.log_scales.push(Vec3::new(row[7], row[8], row[9]));
            cloud.opacity_logits.push(row[10]);
            cloud.colors.push(Vec3::new(row[11], row[12], row[13]));
            cloud.features.extend_from_slice(&row[14..]);
        }
        cloud
    }
}

/// Which regressor produced a residual field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    /// A free per-splat table of residuals.
    #[default]
    Direct,
    /// The pose-conditioned deformation MLP.
    Mlp,
}

/// Additive corrections to every raw splat parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualField {
    pub layout: ParamLayout,
    /// `len × layout.stride()` values.
    pub data: Vec<f64>,
    pub backend: Backend,
}

impl ResidualField {
    pub fn zeros(len: usize, feature_dim: usize, backend: Backend) -> Self {
        let layout = ParamLayout::new(feature_dim);
        Self { layout, data: vec![0.0; len * layout.stride()], backend }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.layout.stride()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let s = self.layout.stride();
        &self.data[k * s..(k + 1) * s]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        let s = self.layout.stride();
        &mut self.data[k * s..(k + 1) * s]
    }

    /// Elementwise sum of two residual fields of the same shape.
    pub fn sum(&self, other: &ResidualField) -> Result<ResidualField> {
        if self.layout != other.layout || self.data.len() != other.data.len() {
            return Err(invalid("residual shapes differ"));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(ResidualField { layout: self.layout, data, backend: self.backend })
    }
}

/// `Ĝ = G + ΔG` for every parameter block; quaternions are renormalized.
pub fn apply_residual(base: &GaussianCloud, res: &ResidualField) -> Result<GaussianCloud> {
    base.validate()?;
    if res.layout.feature_dim != base.feature_dim || res.len() != base.len() || res.data.len() % res.layout.stride() != 0 {
        return Err(invalid(alloc::format!(
            "residual shape ({} splats, F={}) does not match cloud ({} splats, F={})",
            res.len(),
            res.layout.feature_dim,
            base.len(),
            base.feature_dim
        )));
    }
    let mut out = base.clone();
    let f = base.feature_dim;
    for k in 0..base.len() {
        let r = res.row(k);
        out.means[k] += Vec3::new(r[0], r[1], r[2]);
        out.rotations[k] = base.rotations[k].add(Quat::new(r[3], r[4], r[5], r[6])).normalized()?;
        out.log_scales[k] += Vec3::new(r[7], r[8], r[9]);
        out.opacity_logits[k] += r[10];
        out.colors[k] += Vec3::new(r[11], r[12], r[13]);
        for (dst, d) in out.features[k * f..(k + 1) * f].iter_mut().zip(&r[14..]) {
            *dst += d;
        }
    }
    Ok(out)
}

/// Pulls gradients on the deformed cloud back to the residual field.
///
/// All blocks pass through unchanged except the quaternion, which goes
/// through the Jacobian of `q ↦ q/|q|` at `q_base + δq`.
pub fn apply_residual_backward(base: &GaussianCloud, res: &ResidualField, grad_deformed: &[f64]) -> Vec<f64> {
    let stride = res.layout.stride();
    let mut g = grad_deformed.to_vec();
    for k in 0..base.len() {
        let r = res.row(k);
        let sum = base.rotations[k].add(Quat::new(r[3], r[4], r[5], r[6]));
        let n = sum.norm();
        let u = sum.scale(1.0 / n).to_array();
        let row = &mut g[k * stride + 3..k * stride + 7];
        let dot: f64 = (0..4).map(|i| u[i] * row[i]).sum();
        for i in 0..4 {
            row[i] = (row[i] - u[i] * dot) / n;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::float;

    fn cloud() -> GaussianCloud {
        GaussianCloud {
            means: vec![Vec3::new(0.1, 0.2, 0.3), Vec3::new(-1.0, 0.0, 2.0)],
            rotations: vec![Quat::IDENTITY, Quat::new(0.5, 0.5, 0.5, 0.5)],
            log_scales: vec![Vec3::splat(-2.0), Vec3::new(-1.0, -2.0, -3.0)],
            opacity_logits: vec![0.0, 1.0],
            colors: vec![Vec3::splat(0.5), Vec3::new(0.1, 0.2, 0.3)],
            features: vec![0.0, 1.0, 2.0, 3.0],
            feature_dim: 2,
            sh_degree: 0,
        }
    }

    #[test]
    fn zero_residual_is_identity() {
        let c = cloud();
        let out = apply_residual(&c, &ResidualField::zeros(2, 2, Backend::Direct)).unwrap();
        assert_eq!(out, c);
    }

    #[test]
    fn translation_and_opacity() {
        let c = cloud();
        let mut r = ResidualField::zeros(2, 2, Backend::Direct);
        for k in 0..2 {
            r.row_mut(k)[2] = 0.5;
            r.row_mut(k)[10] = 10.0;
        }
        let out = apply_residual(&c, &r).unwrap();
        for k in 0..2 {
            assert!((out.means[k].z - c.means[k].z - 0.5).abs() < 1e-15);
            assert_eq!(out.means[k].x, c.means[k].x);
        }
        // sigmoid(0 + 10)
        assert!((out.opacity(0) - 0.9999546021312976).abs() < 1e-15);
        assert!((float::sigmoid(10.0) - 0.99995460213).abs() < 1e-10);
    }

    #[test]
    fn shape_mismatch() {
        let c = cloud();
        assert!(apply_residual(&c, &ResidualField::zeros(3, 2, Backend::Direct)).is_err());
        assert!(apply_residual(&c, &ResidualField::zeros(2, 3, Backend::Direct)).is_err());
    }

    #[test]
    fn pack_unpack_round_trip() {
        let c = cloud();
        let l = ParamLayout::new(2);
        assert_eq!(l.unpack(&l.pack(&c)), c);
    }
}
