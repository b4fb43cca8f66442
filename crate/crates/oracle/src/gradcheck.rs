//! Central-difference checking of rasterizer gradients.
//!
//! The scalar under test is `Σ w · output` over every rendered channel with
//! fixed random weights `w`. A coordinate is skipped when nudging it changes
//! any discrete decision of the compositor (which splats contribute, alpha
//! clamping, early termination, depth order, color or scale clamping), since
//! the loss is not differentiable there.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skelsplat_core::gaussian::{GaussianCloud, ParamLayout};
use skelsplat_core::geometry::Camera;
use skelsplat_core::raster::{
    backward_rasterize, rasterize_prepared, Channels, Prepared, RasterConfig, RenderGrad, RenderOutput,
};

use crate::screen_splats;

/// Worst relative error per parameter group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradReport {
    /// `(group, worst relative error, coordinates checked)`.
    pub groups: Vec<(&'static str, f64, usize)>,
    pub skipped: usize,
}

impl GradReport {
    pub fn worst(&self, group: &str) -> f64 {
        self.groups.iter().find(|g| g.0 == group).map_or(0.0, |g| g.1)
    }

    pub fn checked(&self) -> usize {
        self.groups.iter().map(|g| g.2).sum()
    }

    fn record(&mut self, group: &'static str, err: Option<f64>) {
        let i = match self.groups.iter().position(|g| g.0 == group) {
            Some(i) => i,
            None => {
                self.groups.push((group, 0.0, 0));
                self.groups.len() - 1
            }
        };
        match err {
            Some(e) => {
                self.groups[i].1 = self.groups[i].1.max(e);
                self.groups[i].2 += 1;
            }
            None => self.skipped += 1,
        }
    }

    pub fn merge(&mut self, other: &GradReport) {
        for &(g, e, n) in &other.groups {
            let i = match self.groups.iter().position(|x| x.0 == g) {
                Some(i) => i,
                None => {
                    self.groups.push((g, 0.0, 0));
                    self.groups.len() - 1
                }
            };
            self.groups[i].1 = self.groups[i].1.max(e);
            self.groups[i].2 += n;
        }
        self.skipped += other.skipped;
    }
}

/// Weights applied to each output channel.
struct Weights {
    color: Vec<f64>,
    features: Vec<f64>,
    alpha: Vec<f64>,
}

fn objective(out: &RenderOutput, w: &Weights) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    dot(&out.color, &w.color) + dot(&out.features, &w.features) + dot(&out.alpha, &w.alpha)
}

fn render(cloud: &GaussianCloud, cam: &Camera, cfg: &RasterConfig) -> RenderOutput {
    let prep = Prepared::new(cloud, cam, cfg).expect("valid scene");
    rasterize_prepared(&prep, cloud, &Channels::ALL_DENSE, cfg).expect("render")
}

/// Hash of every discrete decision the compositor makes for `cloud`.
pub fn fingerprint(cloud: &GaussianCloud, cam: &Camera, cfg: &RasterConfig) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut mix = |v: u64| {
        h ^= v;
        h = h.wrapping_mul(0x0100_0000_01b3);
    };
    let splats = screen_splats(cloud, cam, cfg);
    for s in &splats {
        mix(s.index as u64);
    }
    for py in 0..cam.height {
        for px in 0..cam.width {
            let mut t = 1.0;
            for s in &splats {
                let dx = px as f64 - s.u;
                let dy = py as f64 - s.v;
                let q = s.inv[0] * dx * dx + 2.0 * s.inv[1] * dx * dy + s.inv[2] * dy * dy;
                let raw = s.opacity * (-0.5 * q).exp();
                let alpha = raw.min(cfg.alpha_max);
                if alpha < cfg.alpha_min {
                    continue;
                }
                mix(s.index as u64 * 2 + u64::from(raw > cfg.alpha_max));
                t *= 1.0 - alpha;
                if t < cfg.transmittance_min {
                    mix(u64::MAX);
                    break;
                }
            }
            mix(u64::MAX - 1);
        }
    }
    for k in 0..cloud.len() {
        let c = cloud.colors[k];
        for v in [c.x, c.y, c.z] {
            mix(u64::from((0.0..=1.0).contains(&v)));
        }
        let s = cloud.log_scales[k];
        for v in [s.x, s.y, s.z] {
            mix(u64::from((-10.0..=4.0).contains(&v)));
        }
    }
    h
}

/// Finite-difference step for a parameter of `group`.
pub fn step_for(group: &str) -> f64 {
    match group {
        "color" | "feature" => 1e-4,
        _ => 1e-5,
    }
}

/// Checks `samples` random coordinates of splats that appear on screen.
pub fn check_scene(cloud: &GaussianCloud, cam: &Camera, cfg: &RasterConfig, samples: usize, seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_px = cam.width as usize * cam.height as usize;
    let f = cloud.feature_dim;
    let mut uniform = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let weights = Weights { color: uniform(n_px * 3), features: uniform(n_px * f), alpha: uniform(n_px) };

    let prep = Prepared::new(cloud, cam, cfg).expect("valid scene");
    let upstream = RenderGrad {
        color: weights.color.clone(),
        features: weights.features.clone(),
        segmentation: Vec::new(),
        alpha: weights.alpha.clone(),
    };
    let grad = backward_rasterize(&prep, cloud, cam, &Channels::ALL_DENSE, cfg, &upstream).expect("backward");
    let layout = ParamLayout::new(f);
    let stride = layout.stride();
    let visible: Vec<usize> = prep.splats.iter().map(|s| s.index as usize).collect();
    let base_fp = fingerprint(cloud, cam, cfg);
    let packed = layout.pack(cloud);

    let mut report = GradReport::default();
    if visible.is_empty() {
        return report;
    }
    for _ in 0..samples {
        let k = visible[rng.random_range(0..visible.len())];
        let i = rng.random_range(0..stride);
        let group = layout.group_of(i);
        let h = step_for(group);
        let idx = k * stride + i;
        let mut plus = packed.clone();
        plus[idx] += h;
        let mut minus = packed.clone();
        minus[idx] -= h;
        let cp = layout.unpack(&plus);
        let cm = layout.unpack(&minus);
        if fingerprint(&cp, cam, cfg) != base_fp || fingerprint(&cm, cam, cfg) != base_fp {
            report.record(group, None);
            continue;
        }
        let fd = (objective(&render(&cp, cam, cfg), &weights) - objective(&render(&cm, cam, cfg), &weights)) / (2.0 * h);
        let a = grad[idx];
        let scale = a.abs().max(fd.abs()).max(1e-6);
        report.record(group, Some((a - fd).abs() / scale));
    }
    report
}
