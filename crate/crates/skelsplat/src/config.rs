//! The single pipeline configuration file. Every section and key is
//! optional and falls back to its default; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use skelsplat_core::densify::{DensifyConfig, FaceRadiusMode};
use skelsplat_core::fit::FitConfig;
use skelsplat_core::gaussian::{Backend, InitConfig, MlpConfig};
use skelsplat_core::geometry::Vec3;
use skelsplat_core::raster::RasterConfig;
use skelsplat_core::skinning::SegTrainConfig;

use crate::error::{toml_error, IoError, Result};
use crate::formats::image::MAX_LABEL;
use crate::formats::text::read_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaceRadius {
    HalfMaxPairwise,
    MaxPairwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendName {
    Direct,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensifySection {
    pub points_per_limb: usize,
    pub points_per_region: usize,
    pub radius_factor: f64,
    pub face_radius_mode: FaceRadius,
    pub torso_inflation: f64,
    pub torso_min_thickness: f64,
    pub exclude_region_limbs: bool,
    pub seed: u64,
}

impl Default for DensifySection {
    fn default() -> Self {
        let d = DensifyConfig::default();
        Self {
            points_per_limb: d.points_per_limb,
            points_per_region: d.points_per_region,
            radius_factor: d.radius_factor,
            face_radius_mode: FaceRadius::HalfMaxPairwise,
            torso_inflation: d.torso_inflation,
            torso_min_thickness: d.torso_min_thickness,
            exclude_region_limbs: d.exclude_region_limbs,
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub feature_dim: usize,
    /// Body classes of the segmentation template (background excluded).
    pub num_classes: usize,
    pub sh_degree: u8,
    pub init_opacity: f64,
    pub init_color: f64,
    pub init_scale_factor: f64,
    pub mlp_hidden: Vec<usize>,
    pub pe_bands: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let i = InitConfig::default();
        let m = MlpConfig::default();
        Self {
            feature_dim: i.feature_dim,
            num_classes: 6,
            sh_degree: 0,
            init_opacity: i.opacity,
            init_color: i.color,
            init_scale_factor: i.scale_factor,
            mlp_hidden: m.hidden,
            pe_bands: m.pe_bands,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimSection {
    pub lambda: f64,
    pub steps: usize,
    pub backend: BackendName,
    pub lr_mean: f64,
    pub lr_other: f64,
    pub lr_mlp: f64,
}

impl Default for OptimSection {
    fn default() -> Self {
        let f = FitConfig::default();
        Self {
            lambda: f.lambda,
            steps: f.steps,
            backend: BackendName::Direct,
            lr_mean: f.lr_mean,
            lr_other: f.lr_other,
            lr_mlp: f.lr_mlp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    pub tile_size: u32,
    pub background: [f64; 3],
    pub low_pass: f64,
    pub alpha_max: f64,
    pub alpha_min: f64,
    pub transmittance_min: f64,
}

impl Default for RenderSection {
    fn default() -> Self {
        let r = RasterConfig::default();
        Self {
            tile_size: r.tile_size,
            background: r.background.to_array(),
            low_pass: r.low_pass,
            alpha_max: r.alpha_max,
            alpha_min: r.alpha_min,
            transmittance_min: r.transmittance_min,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentSection {
    /// Initial isotropic scale of label splats (meters).
    pub init_scale: f64,
    pub init_opacity: f64,
    pub steps: usize,
    pub lr: f64,
}

impl Default for SegmentSection {
    fn default() -> Self {
        let t = SegTrainConfig::default();
        Self { init_scale: 0.02, init_opacity: 0.9, steps: t.steps, lr: t.lr }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub densify: DensifySection,
    pub model: ModelSection,
    pub optim: OptimSection,
    pub render: RenderSection,
    pub segment: SegmentSection,
}

impl PipelineConfig {
    pub fn from_toml(path: &Path, text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| {
            let (line, message) = toml_error(text, &e);
            IoError::Config { path: path.to_path_buf(), line, message }
        })?;
        cfg.validate().map_err(|message| IoError::Config { path: path.to_path_buf(), line: 1, message })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        Self::from_toml(path, &text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    /// Checks ranges; the message names the offending key.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let d = &self.densify;
        let positive = |name: &str, v: f64| if v > 0.0 && v.is_finite() { Ok(()) } else { Err(format!("{name} must be positive")) };
        let non_negative = |name: &str, v: f64| if v >= 0.0 && v.is_finite() { Ok(()) } else { Err(format!("{name} must be non-negative")) };
        if d.points_per_limb == 0 || d.points_per_region == 0 {
            return Err("densify.points_per_limb and densify.points_per_region must be at least 1".into());
        }
        positive("densify.radius_factor", d.radius_factor)?;
        non_negative("densify.torso_inflation", d.torso_inflation)?;
        non_negative("densify.torso_min_thickness", d.torso_min_thickness)?;
        let m = &self.model;
        if m.feature_dim == 0 {
            return Err("model.feature_dim must be at least 1".into());
        }
        if m.num_classes == 0 || m.num_classes > MAX_LABEL as usize {
            return Err(format!("model.num_classes must lie in 1..={MAX_LABEL} (labels share an 8-bit palette with background)"));
        }
        if m.sh_degree != 0 {
            return Err("model.sh_degree: only degree 0 is supported".into());
        }
        if !(m.init_opacity > 0.0 && m.init_opacity < 1.0) {
            return Err("model.init_opacity must lie in (0, 1)".into());
        }
        positive("model.init_scale_factor", m.init_scale_factor)?;
        if m.mlp_hidden.contains(&0) {
            return Err("model.mlp_hidden widths must be at least 1".into());
        }
        let o = &self.optim;
        if !(0.0..=1.0).contains(&o.lambda) {
            return Err("optim.lambda must lie in [0, 1]".into());
        }
        non_negative("optim.lr_mean", o.lr_mean)?;
        non_negative("optim.lr_other", o.lr_other)?;
        non_negative("optim.lr_mlp", o.lr_mlp)?;
        let r = &self.render;
        if r.tile_size == 0 {
            return Err("render.tile_size must be at least 1".into());
        }
        non_negative("render.low_pass", r.low_pass)?;
        if !(r.alpha_min > 0.0 && r.alpha_min <= r.alpha_max && r.alpha_max < 1.0) {
            return Err("render thresholds need 0 < alpha_min <= alpha_max < 1".into());
        }
        if !(r.transmittance_min > 0.0 && r.transmittance_min < 1.0) {
            return Err("render.transmittance_min must lie in (0, 1)".into());
        }
        if r.background.iter().any(|v| !v.is_finite()) {
            return Err("render.background must be finite".into());
        }
        let s = &self.segment;
        positive("segment.init_scale", s.init_scale)?;
        if !(s.init_opacity > 0.0 && s.init_opacity < 1.0) {
            return Err("segment.init_opacity must lie in (0, 1)".into());
        }
        non_negative("segment.lr", s.lr)?;
        Ok(())
    }

    pub fn densify_config(&self) -> DensifyConfig {
        let d = &self.densify;
        DensifyConfig {
            points_per_limb: d.points_per_limb,
            points_per_region: d.points_per_region,
            radius_factor: d.radius_factor,
            face_radius_mode: match d.face_radius_mode {
                FaceRadius::HalfMaxPairwise => FaceRadiusMode::HalfMaxPairwise,
                FaceRadius::MaxPairwise => FaceRadiusMode::MaxPairwise,
            },
            torso_inflation: d.torso_inflation,
            torso_min_thickness: d.torso_min_thickness,
            exclude_region_limbs: d.exclude_region_limbs,
            seed: d.seed,
        }
    }

    pub fn raster_config(&self) -> RasterConfig {
        let r = &self.render;
        RasterConfig {
            tile_size: r.tile_size,
            low_pass: r.low_pass,
            alpha_max: r.alpha_max,
            alpha_min: r.alpha_min,
            transmittance_min: r.transmittance_min,
            background: Vec3::from_array(r.background),
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        let (m, o) = (&self.model, &self.optim);
        FitConfig {
            steps: o.steps,
            lambda: o.lambda,
            backend: match o.backend {
                BackendName::Direct => Backend::Direct,
                BackendName::Mlp => Backend::Mlp,
            },
            lr_mean: o.lr_mean,
            lr_other: o.lr_other,
            lr_mlp: o.lr_mlp,
            densify: self.densify_config(),
            init: InitConfig {
                feature_dim: m.feature_dim,
                opacity: m.init_opacity,
                color: m.init_color,
                scale_factor: m.init_scale_factor,
            },
            raster: self.raster_config(),
            mlp: MlpConfig { hidden: m.mlp_hidden.clone(), pe_bands: m.pe_bands, seed: self.densify.seed },
        }
    }

    pub fn seg_train_config(&self) -> SegTrainConfig {
        SegTrainConfig { steps: self.segment.steps, lr: self.segment.lr, raster: self.raster_config() }
    }
}
