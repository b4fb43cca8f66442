//! Label rendering of a skinned template: linear blend skinning moves
//! canonical vertices to the observed pose, each vertex becomes an isotropic
//! splat carrying a one-hot class, and the composited class scores are
//! trained with a pixelwise cross-entropy.
//!
//! Label images use `0` for background and `k + 1` for template class `k`.
//! The background score of a pixel is its residual transmittance `1 - alpha`.

mod synthetic;

pub use synthetic::{capsule_hit, TwoBoneFixture};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::float;
use crate::gaussian::{GaussianCloud, ParamLayout, LOG_SCALE_MAX, LOG_SCALE_MIN};
use crate::geometry::{Camera, Mat4, Quat, Vec3};
use crate::optim::{adam_step, FitState};
use crate::raster::{backward_rasterize, rasterize_prepared, Channels, Prepared, RasterConfig, RenderGrad, RenderOutput};

/// Canonical-pose vertices with skinning weights and class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalTemplate {
    pub vertices: Vec<Vec3>,
    /// Row-major `len × num_bones`.
    pub weights: Vec<f64>,
    pub labels: Vec<u32>,
    /// Parent bone of each bone, `None` for roots.
    pub bone_parents: Vec<Option<usize>>,
    pub num_classes: usize,
}

impl CanonicalTemplate {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn num_bones(&self) -> usize {
        self.bone_parents.len()
    }

    pub fn weight_row(&self, k: usize) -> &[f64] {
        let b = self.num_bones();
        &self.weights[k * b..(k + 1) * b]
    }

    pub fn validate(&self) -> Result<()> {
        let (n, b) = (self.len(), self.num_bones());
        if self.num_classes == 0 {
            return Err(Error::Config("a template needs at least one class".into()));
        }
        if self.weights.len() != n * b {
            return Err(invalid(format!("weights hold {} values, expected {n}x{b}", self.weights.len())));
        }
        if self.labels.len() != n {
            return Err(invalid(format!("{} labels for {n} vertices", self.labels.len())));
        }
        for (i, p) in self.bone_parents.iter().enumerate() {
            if let Some(p) = *p {
                if p >= b || p == i {
                    return Err(invalid(format!("bone {i} has invalid parent {p}")));
                }
            }
        }
        for k in 0..n {
            let row = self.weight_row(k);
            if row.iter().any(|w| !(*w >= 0.0)) {
                return Err(invalid(format!("vertex {k} has a negative or non-finite weight")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(invalid(format!("weights of vertex {k} sum to {s}")));
            }
            if self.labels[k] as usize >= self.num_classes {
                return Err(Error::Data(format!("vertex {k} has class {} >= {}", self.labels[k], self.num_classes)));
            }
            if !self.vertices[k].is_finite() {
                return Err(invalid(format!("vertex {k} is not finite")));
            }
        }
        Ok(())
    }
}

/// Rigid canonical-to-observation transform of every bone.
#[derive(Debug, Clone, PartialEq)]
pub struct BoneTransforms(pub Vec<Mat4>);

impl BoneTransforms {
    pub fn identity(bones: usize) -> Self {
        Self(vec![Mat4::IDENTITY; bones])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (b, m) in self.0.iter().enumerate() {
            let r = m.rotation_block();
            if !r.is_rotation(1e-6) {
                return Err(invalid(format!("bone {b} transform is not rigid")));
            }
            let bottom = [m.0[3][0], m.0[3][1], m.0[3][2], m.0[3][3]];
            if bottom != [0.0, 0.0, 0.0, 1.0] || !m.translation_part().is_finite() {
                return Err(invalid(format!("bone {b} transform is not affine")));
            }
        }
        Ok(())
    }

    /// `T · ΔB_b` for every bone.
    pub fn premultiplied(&self, t: &Mat4) -> Self {
        Self(self.0.iter().map(|m| *t * *m).collect())
    }
}

/// Transform rotating by `q` about `pivot`.
pub fn rotation_about(pivot: Vec3, q: Quat) -> Result<Mat4> {
    let r = crate::geometry::quat_to_rotmat(q)?;
    let t = pivot - r.mul_vec(pivot);
    Ok(Mat4::from_rotation_translation(&r, t))
}

/// `x_o = (Σ_b ω_b ΔB_b) x_c`, evaluated as `x_c + Σ_b ω_b (ΔB_b x_c - x_c)`
/// so identity transforms leave vertices bit-exact.
pub fn lbs_deform(tmpl: &CanonicalTemplate, bones: &BoneTransforms) -> Result<Vec<Vec3>> {
    if bones.len() != tmpl.num_bones() {
        return Err(invalid(format!("{} bone transforms for a {}-bone template", bones.len(), tmpl.num_bones())));
    }
    if tmpl.weights.len() != tmpl.len() * tmpl.num_bones() {
        return Err(invalid("weight matrix does not match the template"));
    }
    Ok(tmpl
        .vertices
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let mut d = Vec3::ZERO;
            for (w, m) in tmpl.weight_row(k).iter().zip(&bones.0) {
                if *w != 0.0 {
                    d += (m.transform_point(x) - x) * *w;
                }
            }
            x + d
        })
        .collect())
}

/// Template vertices as learnable isotropic label splats.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationSplats {
    pub template: CanonicalTemplate,
    pub log_scales: Vec<f64>,
    pub opacity_logits: Vec<f64>,
}

impl SegmentationSplats {
    pub fn new(template: CanonicalTemplate, scale: f64, opacity: f64) -> Result<Self> {
        template.validate()?;
        if !(scale > 0.0) || !(opacity > 0.0 && opacity < 1.0) {
            return Err(Error::Config("label splats need a positive scale and an opacity in (0, 1)".into()));
        }
        let n = template.len();
        Ok(Self {
            template,
            log_scales: vec![float::ln(scale); n],
            opacity_logits: vec![float::logit(opacity); n],
        })
    }

    pub fn len(&self) -> usize {
        self.template.len()
    }

    pub fn is_empty(&self) -> bool {
        self.template.is_empty()
    }

    /// Splats placed at `centers`, no color or feature payload.
    pub fn cloud(&self, centers: &[Vec3]) -> GaussianCloud {
        let n = centers.len();
        GaussianCloud {
            means: centers.to_vec(),
            rotations: vec![Quat::IDENTITY; n],
            log_scales: self.log_scales.iter().map(|&s| Vec3::splat(s)).collect(),
            opacity_logits: self.opacity_logits.clone(),
            colors: vec![Vec3::ZERO; n],
            features: Vec::new(),
            feature_dim: 0,
            sh_degree: 0,
        }
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.log_scales.clone();
        p.extend_from_slice(&self.opacity_logits);
        p
    }

    fn set_params(&mut self, p: &[f64]) {
        let n = self.len();
        self.log_scales.copy_from_slice(&p[..n]);
        self.opacity_logits.copy_from_slice(&p[n..]);
    }
}

/// Soft class scores plus hard labels (background included).
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationRender {
    pub output: RenderOutput,
    pub labels: Vec<u32>,
}

/// Hard label of one pixel: the argmax over `[1 - alpha, scores...]`, ties
/// going to the lower label.
pub fn pixel_label(alpha: f64, scores: &[f64]) -> u32 {
    let mut best = 0u32;
    let mut best_v = 1.0 - alpha;
    for (k, &s) in scores.iter().enumerate() {
        if s > best_v {
            best = k as u32 + 1;
            best_v = s;
        }
    }
    best
}

fn labels_of(out: &RenderOutput) -> Vec<u32> {
    let c = out.num_classes;
    (0..out.pixel_count()).map(|p| pixel_label(out.alpha[p], &out.segmentation[p * c..(p + 1) * c])).collect()
}

fn render_at(seg: &SegmentationSplats, centers: &[Vec3], cam: &Camera, cfg: &RasterConfig) -> Result<(GaussianCloud, Prepared, RenderOutput)> {
    let cloud = seg.cloud(centers);
    let prep = Prepared::new(&cloud, cam, cfg)?;
    let ch = Channels::segmentation(&seg.template.labels, seg.template.num_classes);
    let out = rasterize_prepared(&prep, &cloud, &ch, cfg)?;
    Ok((cloud, prep, out))
}

/// Poses the template with `bones` and composites its class scores.
pub fn render_segmentation(
    seg: &SegmentationSplats,
    bones: &BoneTransforms,
    cam: &Camera,
    cfg: &RasterConfig,
) -> Result<SegmentationRender> {
    bones.validate()?;
    let centers = lbs_deform(&seg.template, bones)?;
    let (_, _, output) = render_at(seg, &centers, cam, cfg)?;
    let labels = labels_of(&output);
    Ok(SegmentationRender { output, labels })
}

/// A posed observation with its label image.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationView {
    pub camera: Camera,
    pub bones: BoneTransforms,
    /// Row-major `H×W`, values in `0..=num_classes`.
    pub labels: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegTrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub raster: RasterConfig,
}

impl Default for SegTrainConfig {
    fn default() -> Self {
        Self { steps: 200, lr: 0.05, raster: RasterConfig::default() }
    }
}

/// Per-pixel softmax over `[1 - alpha, scores...]`.
pub fn softmax_scores(alpha: f64, scores: &[f64]) -> Vec<f64> {
    let mut z = Vec::with_capacity(scores.len() + 1);
    z.push(1.0 - alpha);
    z.extend_from_slice(scores);
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = float::exp(*v - m);
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
    z
}

fn check_view(v: &SegmentationView, seg: &SegmentationSplats) -> Result<()> {
    let n = v.camera.width as usize * v.camera.height as usize;
    if v.labels.len() != n {
        return Err(invalid(format!("label image has {} pixels, camera has {n}", v.labels.len())));
    }
    if let Some(l) = v.labels.iter().find(|&&l| l as usize > seg.template.num_classes) {
        return Err(Error::Data(format!("label {l} exceeds the {} template classes", seg.template.num_classes)));
    }
    Ok(())
}

/// Mean pixelwise cross-entropy of one view and its gradient with respect to
/// `[log_scales, opacity_logits]`.
fn view_loss(
    seg: &SegmentationSplats,
    centers: &[Vec3],
    view: &SegmentationView,
    cfg: &RasterConfig,
    want_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    let (cloud, prep, out) = render_at(seg, centers, &view.camera, cfg)?;
    let c = seg.template.num_classes;
    let n_px = out.pixel_count();
    let inv = 1.0 / n_px as f64;
    let mut loss = 0.0;
    let mut g_alpha = vec![0.0; n_px];
    let mut g_seg = vec![0.0; n_px * c];
    for p in 0..n_px {
        let probs = softmax_scores(out.alpha[p], &out.segmentation[p * c..(p + 1) * c]);
        let y = view.labels[p] as usize;
        loss -= float::ln(probs[y]) * inv;
        g_alpha[p] = -(probs[0] - if y == 0 { 1.0 } else { 0.0 }) * inv;
        for k in 0..c {
            g_seg[p * c + k] = (probs[k + 1] - if y == k + 1 { 1.0 } else { 0.0 }) * inv;
        }
    }
    if !want_grad {
        return Ok((loss, Vec::new()));
    }
    let ch = Channels::segmentation(&seg.template.labels, c);
    let upstream = RenderGrad { segmentation: g_seg, alpha: g_alpha, ..Default::default() };
    let g = backward_rasterize(&prep, &cloud, &view.camera, &ch, cfg, &upstream)?;
    let n = seg.len();
    let stride = ParamLayout::new(0).stride();
    let mut out_g = vec![0.0; 2 * n];
    for k in 0..n {
        let row = &g[k * stride..(k + 1) * stride];
        let s = seg.log_scales[k];
        if (LOG_SCALE_MIN..=LOG_SCALE_MAX).contains(&s) {
            out_g[k] = row[ParamLayout::LOG_SCALE] + row[ParamLayout::LOG_SCALE + 1] + row[ParamLayout::LOG_SCALE + 2];
        }
        out_g[n + k] = row[ParamLayout::OPACITY];
    }
    Ok((loss, out_g))
}

/// Mean cross-entropy over `views` and its gradient with respect to
/// `[log_scales, opacity_logits]`.
pub fn segmentation_loss(
    seg: &SegmentationSplats,
    views: &[SegmentationView],
    cfg: &RasterConfig,
) -> Result<(f64, Vec<f64>)> {
    let centers = views.iter().map(|v| lbs_deform(&seg.template, &v.bones)).collect::<Result<Vec<_>>>()?;
    loss_at(seg, &centers, views, cfg, true)
}

fn loss_at(
    seg: &SegmentationSplats,
    centers: &[Vec<Vec3>],
    views: &[SegmentationView],
    cfg: &RasterConfig,
    want_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    let w = 1.0 / views.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; if want_grad { 2 * seg.len() } else { 0 }];
    for (v, c) in views.iter().zip(centers) {
        let (l, g) = view_loss(seg, c, v, cfg, want_grad)?;
        loss += l * w;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b * w;
        }
    }
    Ok((loss, grad))
}

/// Adam on per-vertex log-scale and opacity logit; centers stay bound to
/// the skinned template. Returns the trained splats and the loss measured
/// before each step followed by the final loss.
pub fn train_segmentation(
    seg: &SegmentationSplats,
    views: &[SegmentationView],
    cfg: &SegTrainConfig,
) -> Result<(SegmentationSplats, Vec<f64>)> {
    seg.template.validate()?;
    for v in views {
        v.bones.validate()?;
        v.camera.validate()?;
        check_view(v, seg)?;
    }
    let mut out = seg.clone();
    if cfg.steps == 0 {
        return Ok((out, Vec::new()));
    }
    if views.is_empty() {
        return Err(invalid("at least one segmentation view is required"));
    }
    let centers = views.iter().map(|v| lbs_deform(&seg.template, &v.bones)).collect::<Result<Vec<_>>>()?;
    let mut state = FitState::with_uniform_lr(out.params(), cfg.lr, 0.0);
    let mut history = Vec::with_capacity(cfg.steps + 1);
    for _ in 0..cfg.steps {
        let (loss, grad) = loss_at(&out, &centers, views, &cfg.raster, true)?;
        history.push(loss);
        adam_step(&mut state, &grad)?;
        out.set_params(&state.params);
    }
    history.push(loss_at(&out, &centers, views, &cfg.raster, false)?.0);
    Ok((out, history))
}

/// Intersection-over-union of every label, `None` for labels absent from `gt`.
pub fn class_ious(pred: &[u32], gt: &[u32], num_labels: usize) -> Result<Vec<Option<f64>>> {
    if pred.len() != gt.len() {
        return Err(invalid(format!("label images differ in size: {} vs {}", pred.len(), gt.len())));
    }
    if let Some(l) = pred.iter().chain(gt).find(|&&l| l as usize >= num_labels) {
        return Err(Error::Data(format!("label {l} is out of range for {num_labels} labels")));
    }
    let mut inter = vec![0usize; num_labels];
    let mut union = vec![0usize; num_labels];
    let mut present = vec![false; num_labels];
    for (&p, &g) in pred.iter().zip(gt) {
        present[g as usize] = true;
        union[g as usize] += 1;
        if p == g {
            inter[g as usize] += 1;
        } else {
            union[p as usize] += 1;
        }
    }
    Ok((0..num_labels).map(|c| present[c].then(|| inter[c] as f64 / union[c] as f64)).collect())
}

/// Mean intersection-over-union over the labels present in `gt`.
pub fn miou(pred: &[u32], gt: &[u32], num_labels: usize) -> Result<f64> {
    let ious: Vec<f64> = class_ious(pred, gt, num_labels)?.into_iter().flatten().collect();
    if ious.is_empty() {
        return Err(invalid("ground truth is empty"));
    }
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}
