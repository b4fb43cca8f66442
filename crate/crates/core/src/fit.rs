//! The residual fitting loop: densify, initialize, then repeatedly predict
//! residuals, render, score against a target view and take an Adam step.
//!
//! Views are visited round-robin, one per step.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::densify::{densify_pcd, DensifyConfig};
use crate::error::{invalid, Error, Result};
use crate::gaussian::{
    apply_residual, apply_residual_backward, Backend, DeformationMLP, GaussianCloud, InitConfig, MlpConfig,
    ParamLayout, ResidualField,
};
use crate::geometry::{Camera, JointRotation6D, Skeleton, Vec3};
use crate::image::Image;
use crate::loss::{psnr, ssim, step1_loss_grad, DEFAULT_LAMBDA};
use crate::optim::{adam_step, FitState};
use crate::raster::{backward_rasterize, rasterize, rasterize_prepared, Channels, Prepared, RasterConfig, RenderGrad};

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub steps: usize,
    pub lambda: f64,
    pub backend: Backend,
    /// Mean-residual rate, multiplied by the scene radius.
    pub lr_mean: f64,
    /// Rate of every other residual block.
    pub lr_other: f64,
    /// Global rate of the MLP weights.
    pub lr_mlp: f64,
    pub densify: DensifyConfig,
    pub init: InitConfig,
    pub raster: RasterConfig,
    pub mlp: MlpConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            steps: 10_000,
            lambda: DEFAULT_LAMBDA,
            backend: Backend::Direct,
            lr_mean: 1.6e-4,
            lr_other: 1e-3,
            lr_mlp: 1e-3,
            densify: DensifyConfig::default(),
            init: InitConfig::default(),
            raster: RasterConfig::default(),
            mlp: MlpConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config("lambda must lie in [0, 1]".to_string()));
        }
        for (name, v) in [("lr_mean", self.lr_mean), ("lr_other", self.lr_other), ("lr_mlp", self.lr_mlp)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be a non-negative number")));
            }
        }
        self.densify.validate()
    }
}

/// A camera and the image it should see.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetView {
    pub camera: Camera,
    pub image: Image,
}

/// Losses of one step, measured before its update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRecord {
    pub step: usize,
    pub l1: f64,
    pub dssim: f64,
    pub total: f64,
    pub psnr: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    /// Frozen initialization the residuals are added to.
    pub base: GaussianCloud,
    /// `base` with the final residuals applied.
    pub cloud: GaussianCloud,
    pub state: FitState,
    pub history: Vec<HistoryRecord>,
    /// The trained network when the MLP backend is used.
    pub mlp: Option<DeformationMLP>,
}

/// Densified and initialized cloud for `sk`.
pub fn initial_cloud(sk: &Skeleton, cfg: &FitConfig) -> Result<GaussianCloud> {
    let pcd = densify_pcd(sk, &cfg.densify)?;
    GaussianCloud::from_point_cloud(&pcd, &cfg.init)
}

/// Renders the color channel of `cloud` as an image.
pub fn render_color(cloud: &GaussianCloud, cam: &Camera, cfg: &RasterConfig) -> Result<Image> {
    let out = rasterize(cloud, cam, &Channels::COLOR, cfg)?;
    Image::new(out.width, out.height, 3, out.color)
}

/// PSNR and SSIM of `cloud` against `view`.
pub fn evaluate(cloud: &GaussianCloud, view: &TargetView, cfg: &RasterConfig) -> Result<(f64, f64)> {
    let img = render_color(cloud, &view.camera, cfg)?;
    Ok((psnr(&img, &view.image)?, ssim(&img, &view.image)?))
}

/// Largest distance of a splat center from the centroid.
pub fn scene_radius(cloud: &GaussianCloud) -> f64 {
    if cloud.is_empty() {
        return 1.0;
    }
    let c = cloud.means.iter().fold(Vec3::ZERO, |a, &m| a + m) * (1.0 / cloud.len() as f64);
    let r = cloud.means.iter().map(|&m| (m - c).norm()).fold(0.0, f64::max);
    if r > 0.0 {
        r
    } else {
        1.0
    }
}

fn direct_rates(n: usize, feature_dim: usize, cfg: &FitConfig, radius: f64) -> Vec<f64> {
    let layout = ParamLayout::new(feature_dim);
    let stride = layout.stride();
    let mut lr = vec![cfg.lr_other; n * stride];
    for k in 0..n {
        for i in 0..3 {
            lr[k * stride + ParamLayout::MEAN + i] = cfg.lr_mean * radius;
        }
    }
    lr
}

enum Model {
    Direct,
    Mlp { mlp: DeformationMLP, pose: Vec<JointRotation6D> },
}

impl Model {
    fn residuals(&self, base: &GaussianCloud, params: &[f64]) -> Result<(ResidualField, Option<crate::gaussian::MlpCache>)> {
        match self {
            Model::Direct => {
                let mut r = ResidualField::zeros(base.len(), base.feature_dim, Backend::Direct);
                r.data.copy_from_slice(params);
                Ok((r, None))
            }
            Model::Mlp { mlp, pose } => {
                let mut m = mlp.clone();
                m.params.copy_from_slice(params);
                let (r, cache) = m.forward(pose, &base.means)?;
                Ok((r, Some(cache)))
            }
        }
    }
}

/// Runs the fitting loop on the initialization of `sk`.
pub fn fit_step1(sk: &Skeleton, views: &[TargetView], cfg: &FitConfig) -> Result<FitOutput> {
    sk.validate()?;
    let base = initial_cloud(sk, cfg)?;
    fit_cloud(base, sk.joints.len(), views, cfg)
}

/// Runs the fitting loop on an explicit base cloud. `num_joints` sizes the
/// pose input of the MLP backend.
pub fn fit_cloud(base: GaussianCloud, num_joints: usize, views: &[TargetView], cfg: &FitConfig) -> Result<FitOutput> {
    cfg.validate()?;
    base.validate()?;
    if views.is_empty() {
        return Err(invalid("at least one target view is required"));
    }
    for (i, v) in views.iter().enumerate() {
        v.camera.validate()?;
        if v.image.width != v.camera.width || v.image.height != v.camera.height || v.image.channels != 3 {
            return Err(invalid(format!("target {i} does not match its camera's image size")));
        }
    }
    let (model, state) = match cfg.backend {
        Backend::Direct => {
            let stride = ParamLayout::new(base.feature_dim).stride();
            let lr = direct_rates(base.len(), base.feature_dim, cfg, scene_radius(&base));
            (Model::Direct, FitState::new(vec![0.0; base.len() * stride], lr, cfg.lambda)?)
        }
        Backend::Mlp => {
            let mlp = DeformationMLP::new(num_joints, base.feature_dim, &cfg.mlp);
            let state = FitState::with_uniform_lr(mlp.params.clone(), cfg.lr_mlp, cfg.lambda);
            let pose = vec![JointRotation6D::identity(); num_joints];
            (Model::Mlp { mlp, pose }, state)
        }
    };
    run(base, model, state, views, cfg)
}

fn run(base: GaussianCloud, model: Model, mut state: FitState, views: &[TargetView], cfg: &FitConfig) -> Result<FitOutput> {
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let view = &views[step % views.len()];
        let (res, cache) = model.residuals(&base, &state.params)?;
        let cloud = apply_residual(&base, &res)?;
        let prep = Prepared::new(&cloud, &view.camera, &cfg.raster)?;
        let out = rasterize_prepared(&prep, &cloud, &Channels::COLOR, &cfg.raster)?;
        let img = Image::new(out.width, out.height, 3, out.color)?;
        let (report, grad_img) = step1_loss_grad(&img, &view.image, cfg.lambda)?;
        history.push(HistoryRecord {
            step,
            l1: report.l1,
            dssim: report.dssim,
            total: report.total,
            psnr: psnr(&img, &view.image)?,
        });
        let diverged = |reason: alloc::string::String, history: &Vec<HistoryRecord>| Error::Diverged {
            step,
            reason,
            history: history.clone(),
        };
        if !report.total.is_finite() {
            return Err(diverged(format!("loss is {}", report.total), &history));
        }
        let upstream = RenderGrad { color: grad_img, ..Default::default() };
        let g_cloud = backward_rasterize(&prep, &cloud, &view.camera, &Channels::COLOR, &cfg.raster, &upstream)?;
        let g_res = apply_residual_backward(&base, &res, &g_cloud);
        let grads = match (&model, cache) {
            (Model::Mlp { mlp, .. }, Some(cache)) => {
                let mut m = mlp.clone();
                m.params.copy_from_slice(&state.params);
                m.backward(&cache, &g_res)
            }
            _ => g_res,
        };
        match adam_step(&mut state, &grads) {
            Ok(()) => {}
            Err(Error::NonFinite(msg)) => return Err(diverged(msg, &history)),
            Err(e) => return Err(e),
        }
    }
    let (res, _) = model.residuals(&base, &state.params)?;
    let cloud = apply_residual(&base, &res)?;
    let mlp = match model {
        Model::Mlp { mut mlp, .. } => {
            mlp.params.copy_from_slice(&state.params);
            Some(mlp)
        }
        Model::Direct => None,
    };
    Ok(FitOutput { base, cloud, state, history, mlp })
}
