use alloc::vec;
use alloc::vec::Vec;

use crate::densify::PointCloud;
use crate::error::{invalid, Error, Result};
use crate::float;
use crate::geometry::{Mat3, Quat, Vec3};

/// Log-scales are clamped to this range before `exp`.
pub const LOG_SCALE_MIN: f64 = -10.0;
pub const LOG_SCALE_MAX: f64 = 4.0;

/// Raw (pre-activation) splat parameters, stored per attribute.
///
/// Activations: `scale = exp(clamp(log_scale))`, `opacity = sigmoid(logit)`.
/// Colors are degree-0 RGB and are clamped to `[0, 1]` only when rendering.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianCloud {
    pub means: Vec<Vec3>,
    pub rotations: Vec<Quat>,
    pub log_scales: Vec<Vec3>,
    pub opacity_logits: Vec<f64>,
    pub colors: Vec<Vec3>,
    /// Row-major `len × feature_dim`.
    pub features: Vec<f64>,
    pub feature_dim: usize,
    /// Spherical-harmonic degree of `colors`; only 0 is rendered.
    pub sh_degree: u8,
}

/// One splat's raw parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splat {
    pub mean: Vec3,
    pub rotation: Quat,
    pub log_scale: Vec3,
    pub opacity_logit: f64,
}

/// Activated geometry of one splat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activated {
    pub rotation: Mat3,
    pub scale: Vec3,
    pub opacity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitConfig {
    pub feature_dim: usize,
    pub opacity: f64,
    pub color: f64,
    /// Initial isotropic scale as a fraction of the mean nearest-neighbour distance.
    pub scale_factor: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { feature_dim: 16, opacity: 0.1, color: 0.5, scale_factor: 0.5 }
    }
}

#[inline]
pub(crate) fn clamp_log_scale(s: f64) -> f64 {
    s.clamp(LOG_SCALE_MIN, LOG_SCALE_MAX)
}

#[inline]
pub(crate) fn activate_scale(log_scale: Vec3) -> Vec3 {
    Vec3::new(
        float::exp(clamp_log_scale(log_scale.x)),
        float::exp(clamp_log_scale(log_scale.y)),
        float::exp(clamp_log_scale(log_scale.z)),
    )
}

/// `Σ = R·S·Sᵀ·Rᵀ` with `R` from `q` and `S = diag(exp(log_scale))`.
pub fn assemble_covariance(q: Quat, log_scale: Vec3) -> Result<Mat3> {
    let r = crate::geometry::quat_to_rotmat(q)?;
    Ok(covariance_from(&r, activate_scale(log_scale)))
}

pub(crate) fn covariance_from(r: &Mat3, s: Vec3) -> Mat3 {
    let s2 = s.component_mul(s);
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = r.0[i][0] * r.0[j][0] * s2.x + r.0[i][1] * r.0[j][1] * s2.y + r.0[i][2] * r.0[j][2] * s2.z;
        }
    }
    Mat3(out)
}

/// Unnormalized density `exp(-½ (x-μ)ᵀ Σ⁻¹ (x-μ))`.
pub fn eval_gaussian(splat: &Splat, x: Vec3) -> Result<f64> {
    let r = crate::geometry::quat_to_rotmat(splat.rotation)?;
    let s = activate_scale(splat.log_scale);
    let local = r.transpose().mul_vec(x - splat.mean);
    let m = Vec3::new(local.x / s.x, local.y / s.y, local.z / s.z);
    Ok(float::exp(-0.5 * m.norm_squared()))
}

impl GaussianCloud {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn empty(feature_dim: usize) -> Self {
        Self { feature_dim, ..Self::default() }
    }

    /// Frozen base parameters for a point cloud: identity rotations, one
    /// isotropic scale from the mean nearest-neighbour spacing, low opacity,
    /// gray color and zero features.
    pub fn from_point_cloud(pc: &PointCloud, cfg: &InitConfig) -> Result<Self> {
        if !(cfg.opacity > 0.0 && cfg.opacity < 1.0) {
            return Err(Error::Config("initial opacity must lie in (0, 1)".into()));
        }
        if !(cfg.scale_factor > 0.0) {
            return Err(Error::Config("scale_factor must be positive".into()));
        }
        let n = pc.len();
        let spacing = pc.mean_nearest_neighbor_distance().unwrap_or(0.01);
        let log_s = float::ln((cfg.scale_factor * spacing).max(1e-6));
        Ok(Self {
            means: pc.points.clone(),
            rotations: vec![Quat::IDENTITY; n],
            log_scales: vec![Vec3::splat(log_s); n],
            opacity_logits: vec![float::logit(cfg.opacity); n],
            colors: vec![Vec3::splat(cfg.color); n],
            features: vec![0.0; n * cfg.feature_dim],
            feature_dim: cfg.feature_dim,
            sh_degree: 0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.rotations.len() != n
            || self.log_scales.len() != n
            || self.opacity_logits.len() != n
            || self.colors.len() != n
            || self.features.len() != n * self.feature_dim
        {
            return Err(invalid("gaussian cloud attribute arrays have mismatched lengths"));
        }
        if self.sh_degree != 0 {
            return Err(Error::Config("only SH degree 0 is supported".into()));
        }
        Ok(())
    }

    pub fn splat(&self, k: usize) -> Splat {
        Splat {
            mean: self.means[k],
            rotation: self.rotations[k],
            log_scale: self.log_scales[k],
            opacity_logit: self.opacity_logits[k],
        }
    }

    pub fn feature(&self, k: usize) -> &[f64] {
        &self.features[k * self.feature_dim..(k + 1) * self.feature_dim]
    }

    pub fn scale(&self, k: usize) -> Vec3 {
        activate_scale(self.log_scales[k])
    }

    pub fn opacity(&self, k: usize) -> f64 {
        float::sigmoid(self.opacity_logits[k])
    }

    pub fn covariance(&self, k: usize) -> Result<Mat3> {
        assemble_covariance(self.rotations[k], self.log_scales[k])
    }

    pub fn activated(&self, k: usize) -> Result<Activated> {
        Ok(Activated {
            rotation: crate::geometry::quat_to_rotmat(self.rotations[k])?,
            scale: self.scale(k),
            opacity: self.opacity(k),
        })
    }

    /// Copy with splats reordered so that output splat `i` is input splat `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let f = self.feature_dim;
        let mut features = Vec::with_capacity(self.features.len());
        for &k in order {
            features.extend_from_slice(&self.features[k * f..(k + 1) * f]);
        }
        Self {
            means: order.iter().map(|&k| self.means[k]).collect(),
            rotations: order.iter().map(|&k| self.rotations[k]).collect(),
            log_scales: order.iter().map(|&k| self.log_scales[k]).collect(),
            opacity_logits: order.iter().map(|&k| self.opacity_logits[k]).collect(),
            colors: order.iter().map(|&k| self.colors[k]).collect(),
            features,
            feature_dim: f,
            sh_degree: self.sh_degree,
        }
    }

    /// Appends all splats of `other` (feature widths must agree).
    pub fn extend_from(&mut self, other: &GaussianCloud) -> Result<()> {
        if other.feature_dim != self.feature_dim {
            return Err(invalid("feature widths differ"));
        }
        self.means.extend_from_slice(&other.means);
        self.rotations.extend_from_slice(&other.rotations);
        self.log_scales.extend_from_slice(&other.log_scales);
        self.opacity_logits.extend_from_slice(&other.opacity_logits);
        self.colors.extend_from_slice(&other.colors);
        self.features.extend_from_slice(&other.features);
        Ok(())
    }

    /// Applies a rigid world transform `x ↦ R·x + t` to centers and orientations.
    pub fn transformed(&self, rotation: Quat, translation: Vec3) -> Result<Self> {
        let qn = rotation.normalized()?;
        let r = qn.to_rotmat_unit();
        let mut out = self.clone();
        for m in &mut out.means {
            *m = r.mul_vec(*m) + translation;
        }
        for q in &mut out.rotations {
            *q = qn.mul(*q);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_examples() {
        let c = assemble_covariance(Quat::IDENTITY, Vec3::ZERO).unwrap();
        assert_eq!(c, Mat3::IDENTITY);
        let c = assemble_covariance(Quat::IDENTITY, Vec3::new(float::ln(2.0), 0.0, 0.0)).unwrap();
        assert!(c.max_abs_diff(&Mat3::diag(Vec3::new(4.0, 1.0, 1.0))) < 1e-12);
    }

    #[test]
    fn log_scale_is_clamped() {
        let c = assemble_covariance(Quat::IDENTITY, Vec3::new(50.0, -50.0, 0.0)).unwrap();
        assert!((c.0[0][0] - float::exp(8.0)).abs() < 1e-9);
        assert!((c.0[1][1] - float::exp(-20.0)).abs() < 1e-20);
    }

    #[test]
    fn gaussian_examples() {
        let s = Splat { mean: Vec3::new(1.0, 2.0, 3.0), rotation: Quat::IDENTITY, log_scale: Vec3::ZERO, opacity_logit: 0.0 };
        assert_eq!(eval_gaussian(&s, s.mean).unwrap(), 1.0);
        let v = eval_gaussian(&s, s.mean + Vec3::new(0.0, 1.0, 0.0)).unwrap();
        assert!((v - 0.6065306597126334).abs() < 1e-15);
    }

    #[test]
    fn init_from_points() {
        let pc = PointCloud {
            points: vec![Vec3::ZERO, Vec3::new(0.2, 0.0, 0.0), Vec3::new(0.0, 0.4, 0.0)],
            regions: vec![crate::densify::Region::Face; 3],
        };
        let g = GaussianCloud::from_point_cloud(&pc, &InitConfig::default()).unwrap();
        g.validate().unwrap();
        // nearest neighbours: 0.2, 0.2, 0.4 -> mean 0.8/3
        let expected = 0.5 * 0.8 / 3.0;
        assert!((g.scale(0).x - expected).abs() < 1e-12);
        assert!((g.opacity(1) - 0.1).abs() < 1e-12);
        assert_eq!(g.features.len(), 3 * 16);
    }
}
