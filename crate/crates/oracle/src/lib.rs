//! Reference renderer used to check the tiled rasterizer.
//!
//! Every pixel walks every splat in depth order and evaluates the Gaussian
//! directly; there is no culling by screen extent, no tiling and no sharing
//! with the production projection code beyond the input types.

pub mod fixtures;
pub mod gradcheck;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skelsplat_core::gaussian::GaussianCloud;
use skelsplat_core::geometry::{Camera, Mat3, Quat, Vec3, DEFAULT_NEAR};
use skelsplat_core::raster::RasterConfig;

/// What the oracle composites.
#[derive(Debug, Clone, Copy, Default)]
pub struct Payload<'a> {
    pub color: bool,
    pub features: bool,
    /// One-hot class per splat and class count.
    pub classes: Option<(&'a [u32], usize)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleImage {
    pub width: u32,
    pub height: u32,
    pub color: Vec<f64>,
    pub features: Vec<f64>,
    pub classes: Vec<f64>,
    pub alpha: Vec<f64>,
}

pub(crate) struct Screen {
    pub index: usize,
    pub depth: f64,
    pub u: f64,
    pub v: f64,
    /// Inverse covariance `[a, b, c]`.
    pub inv: [f64; 3],
    pub opacity: f64,
}

fn rotation(q: Quat) -> [[f64; 3]; 3] {
    let n = (q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
    let (w, x, y, z) = (q.w / n, q.x / n, q.y / n, q.z / n);
    [
        [w * w + x * x - y * y - z * z, 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), w * w - x * x + y * y - z * z, 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), w * w - x * x - y * y + z * z],
    ]
}

fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    o
}

fn transpose(a: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = a[j][i];
        }
    }
    o
}

pub(crate) fn screen_splats(cloud: &GaussianCloud, cam: &Camera, cfg: &RasterConfig) -> Vec<Screen> {
    let w = cam.rotation.0;
    let mut out = Vec::new();
    for k in 0..cloud.len() {
        let m = cloud.means[k];
        let xc = [
            w[0][0] * m.x + w[0][1] * m.y + w[0][2] * m.z + cam.translation.x,
            w[1][0] * m.x + w[1][1] * m.y + w[1][2] * m.z + cam.translation.y,
            w[2][0] * m.x + w[2][1] * m.y + w[2][2] * m.z + cam.translation.z,
        ];
        if !(xc[2] >= cam.near) {
            continue;
        }
        let r = rotation(cloud.rotations[k]);
        let ls = cloud.log_scales[k];
        let s = [ls.x, ls.y, ls.z].map(|v| v.clamp(-10.0, 4.0).exp());
        let mut rs = r;
        for row in rs.iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v *= s[j];
            }
        }
        let sigma = matmul(&rs, &transpose(&rs));
        let sc = matmul(&matmul(&w, &sigma), &transpose(&w));
        let z = xc[2];
        let j = [[cam.fx / z, 0.0, -cam.fx * xc[0] / (z * z)], [0.0, cam.fy / z, -cam.fy * xc[1] / (z * z)]];
        let mut c2 = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                c2[a][b] = (0..3).map(|p| (0..3).map(|q| j[a][p] * sc[p][q] * j[b][q]).sum::<f64>()).sum();
            }
        }
        let (a, b, c) = (c2[0][0] + cfg.low_pass, 0.5 * (c2[0][1] + c2[1][0]), c2[1][1] + cfg.low_pass);
        let det = a * c - b * b;
        if !(det > 0.0) {
            continue;
        }
        let logit = cloud.opacity_logits[k];
        let opacity = 1.0 / (1.0 + (-logit).exp());
        out.push(Screen {
            index: k,
            depth: z,
            u: cam.fx * xc[0] / z + cam.cx,
            v: cam.fy * xc[1] / z + cam.cy,
            inv: [c / det, -b / det, a / det],
            opacity,
        });
    }
    out.sort_by(|p, q| p.depth.total_cmp(&q.depth).then(p.index.cmp(&q.index)));
    out
}

/// Composites every splat at every pixel.
pub fn render(cloud: &GaussianCloud, cam: &Camera, payload: Payload, cfg: &RasterConfig) -> OracleImage {
    let splats = screen_splats(cloud, cam, cfg);
    let (w, h) = (cam.width as usize, cam.height as usize);
    let f = if payload.features { cloud.feature_dim } else { 0 };
    let nc = payload.classes.map_or(0, |c| c.1);
    let mut img = OracleImage {
        width: cam.width,
        height: cam.height,
        color: if payload.color { vec![0.0; w * h * 3] } else { Vec::new() },
        features: vec![0.0; w * h * f],
        classes: vec![0.0; w * h * nc],
        alpha: vec![0.0; w * h],
    };
    let bg = cfg.background;
    for py in 0..h {
        for px in 0..w {
            let p = py * w + px;
            let mut t = 1.0;
            let mut rgb = [0.0; 3];
            for s in &splats {
                let dx = px as f64 - s.u;
                let dy = py as f64 - s.v;
                let q = s.inv[0] * dx * dx + 2.0 * s.inv[1] * dx * dy + s.inv[2] * dy * dy;
                let alpha = (s.opacity * (-0.5 * q).exp()).min(cfg.alpha_max);
                if alpha < cfg.alpha_min {
                    continue;
                }
                let wgt = alpha * t;
                let k = s.index;
                if payload.color {
                    let c = cloud.colors[k];
                    rgb[0] += wgt * c.x.clamp(0.0, 1.0);
                    rgb[1] += wgt * c.y.clamp(0.0, 1.0);
                    rgb[2] += wgt * c.z.clamp(0.0, 1.0);
                }
                for i in 0..f {
                    img.features[p * f + i] += wgt * cloud.features[k * cloud.feature_dim + i];
                }
                if let Some((labels, _)) = payload.classes {
                    img.classes[p * nc + labels[k] as usize] += wgt;
                }
                t *= 1.0 - alpha;
                if t < cfg.transmittance_min {
                    break;
                }
            }
            img.alpha[p] = 1.0 - t;
            if payload.color {
                img.color[p * 3] = rgb[0] + t * bg.x;
                img.color[p * 3 + 1] = rgb[1] + t * bg.y;
                img.color[p * 3 + 2] = rgb[2] + t * bg.z;
            }
        }
    }
    img
}

/// Random scene of `n` splats in front of a `size×size` pinhole camera at the origin.
pub fn random_scene(seed: u64, n: usize, size: u32, feature_dim: usize) -> (GaussianCloud, Camera) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let focal = size as f64;
    let c = (size as f64 - 1.0) / 2.0;
    let cam = Camera::new(focal, focal, c, c, Mat3::IDENTITY, Vec3::ZERO, size, size, DEFAULT_NEAR).expect("valid camera");
    let mut cloud = GaussianCloud::empty(feature_dim);
    for _ in 0..n {
        let z: f64 = rng.random_range(1.5..4.0);
        let x: f64 = rng.random_range(-0.55..0.55) * z;
        let y: f64 = rng.random_range(-0.55..0.55) * z;
        cloud.means.push(Vec3::new(x, y, z));
        let q = Quat::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        cloud.rotations.push(if q.norm() > 1e-3 { q } else { Quat::IDENTITY });
        cloud.log_scales.push(Vec3::new(
            rng.random_range(-4.5..-1.8),
            rng.random_range(-4.5..-1.8),
            rng.random_range(-4.5..-1.8),
        ));
        cloud.opacity_logits.push(rng.random_range(-2.5..6.0));
        cloud.colors.push(Vec3::new(
            rng.random_range(-0.1..1.1),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
        ));
        for _ in 0..feature_dim {
            cloud.features.push(rng.random_range(-1.0..1.0));
        }
    }
    (cloud, cam)
}
