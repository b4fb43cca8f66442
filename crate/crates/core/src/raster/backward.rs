//! Reverse-mode gradients of the compositor.
//!
//! Each tile accumulates per-splat partial gradients of the screen-space
//! quantities `(u, v, conic, opacity, payload)`; partials are summed in tile
//! order and then pulled back through the EWA projection to the raw splat
//! parameters. The reduction order is fixed, so results do not depend on
//! the thread count.

use alloc::vec;
use alloc::vec::Vec;

use super::forward::{Footprint, PayloadLayout, Prepared};
use super::{Channels, ProjectedSplat, RasterConfig};
use crate::error::{invalid, Result};
use crate::gaussian::{GaussianCloud, ParamLayout, LOG_SCALE_MAX, LOG_SCALE_MIN};
use crate::geometry::{Camera, Mat3, Vec3};
use crate::par;

/// Upstream gradient, shaped like [`super::RenderOutput`]. Empty vectors are zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RenderGrad {
    pub color: Vec<f64>,
    pub features: Vec<f64>,
    pub segmentation: Vec<f64>,
    pub alpha: Vec<f64>,
}

/// Screen-space partials per splat: `u, v, conic a, conic b, conic c, opacity`.
const SCREEN: usize = 6;

struct Contribution {
    pos: usize,
    alpha: f64,
    g: f64,
    clamped: bool,
    trans: f64,
}

struct TileGrad {
    /// `list.len() × (SCREEN + stride)`.
    grads: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn tile_backward(
    prep: &Prepared,
    t: usize,
    payload: &[f64],
    layout: &PayloadLayout,
    upstream: &RenderGrad,
    cfg: &RasterConfig,
) -> TileGrad {
    let stride = layout.stride;
    let width = SCREEN + stride;
    let list = prep.tile_list(t);
    let mut grads = vec![0.0; list.len() * width];
    if list.is_empty() {
        return TileGrad { grads };
    }
    let feet: Vec<Footprint> = list.iter().map(|&pos| prep.footprint(pos as usize)).collect();
    let (x0, y0, x1, y1) = prep.tile_rect(t);
    let w = prep.width as usize;
    let bg = cfg.background;
    let mut contrib: Vec<Contribution> = Vec::with_capacity(64);
    let mut g_pay = vec![0.0; stride];
    let mut after = vec![0.0; stride];
    for py in y0..y1 {
        for px in x0..x1 {
            let p = py as usize * w + px as usize;
            let (fx, fy) = (px as f64, py as f64);
            contrib.clear();
            let mut trans = 1.0;
            for (li, fp) in feet.iter().enumerate() {
                let Some((alpha, g, clamped)) = fp.alpha_at(px, py, cfg) else { continue };
                contrib.push(Contribution { pos: li, alpha, g, clamped, trans });
                trans *= 1.0 - alpha;
                if trans < cfg.transmittance_min {
                    break;
                }
            }
            if contrib.is_empty() {
                continue;
            }
            let final_t = trans;

            g_pay.iter_mut().for_each(|v| *v = 0.0);
            let mut d_final_t = 0.0;
            if let Some(o) = layout.color {
                if !upstream.color.is_empty() {
                    let g = &upstream.color[p * 3..p * 3 + 3];
                    g_pay[o..o + 3].copy_from_slice(g);
                    d_final_t += g[0] * bg.x + g[1] * bg.y + g[2] * bg.z;
                }
            }
            if let Some(o) = layout.features {
                let f = layout.feature_dim;
                if !upstream.features.is_empty() {
                    g_pay[o..o + f].copy_from_slice(&upstream.features[p * f..(p + 1) * f]);
                }
            }
            if let Some(o) = layout.segmentation {
                let c = layout.num_classes;
                if !upstream.segmentation.is_empty() {
                    g_pay[o..o + c].copy_from_slice(&upstream.segmentation[p * c..(p + 1) * c]);
                }
            }
            if !upstream.alpha.is_empty() {
                d_final_t -= upstream.alpha[p];
            }

            after.iter_mut().for_each(|v| *v = 0.0);
            for c in contrib.iter().rev() {
                let pos = list[c.pos] as usize;
                let row = &payload[pos * stride..(pos + 1) * stride];
                let weight = c.alpha * c.trans;
                let inv = 1.0 / (1.0 - c.alpha);
                let gr = &mut grads[c.pos * width..(c.pos + 1) * width];
                let mut d_alpha = -d_final_t * final_t * inv;
                for i in 0..stride {
                    d_alpha += g_pay[i] * (row[i] * c.trans - after[i] * inv);
                    gr[SCREEN + i] += g_pay[i] * weight;
                    after[i] += row[i] * weight;
                }
                if c.clamped {
                    continue;
                }
                let s = &prep.splats[pos];
                let dx = fx - s.center.x;
                let dy = fy - s.center.y;
                let d_power = d_alpha * c.alpha;
                gr[0] += d_power * (s.conic.a * dx + s.conic.b * dy);
                gr[1] += d_power * (s.conic.b * dx + s.conic.c * dy);
                gr[2] += d_power * (-0.5 * dx * dx);
                gr[3] += d_power * (-dx * dy);
                gr[4] += d_power * (-0.5 * dy * dy);
                gr[5] += d_alpha * c.g;
            }
        }
    }
    TileGrad { grads }
}

/// Pulls screen-space partials of one splat back to its raw parameters.
///
/// Writes `[dμ, dq, d log_scale, d opacity_logit]` into `out[0..11]`.
fn splat_backward(cloud: &GaussianCloud, s: &ProjectedSplat, cam: &Camera, g: &[f64], out: &mut [f64]) {
    let k = s.index as usize;
    let q_raw = cloud.rotations[k];
    let qn_norm = q_raw.norm();
    let qn = q_raw.scale(1.0 / qn_norm);
    let r = qn.to_rotmat_unit();
    let ls = cloud.log_scales[k];
    let sc = crate::gaussian::GaussianCloud::scale(cloud, k);
    let cov3d = crate::gaussian::assemble_covariance(q_raw, ls).unwrap_or(Mat3::ZERO);
    let w = &cam.rotation;
    let x_cam = cam.world_to_camera(cloud.means[k]);
    let j = cam.jacobian_unchecked(x_cam);
    let cov_cam = *w * cov3d * w.transpose();

    // conic M = Σ₂D⁻¹; power uses b twice, so dL/dM offdiag = g_b / 2.
    let m = s.conic;
    let (ga, gb, gc) = (g[2], 0.5 * g[3], g[4]);
    // dL/dΣ₂D = -M · G · M
    let mg00 = m.a * ga + m.b * gb;
    let mg01 = m.a * gb + m.b * gc;
    let mg10 = m.b * ga + m.c * gb;
    let mg11 = m.b * gb + m.c * gc;
    let s00 = -(mg00 * m.a + mg01 * m.b);
    let s01 = -(mg00 * m.b + mg01 * m.c);
    let s10 = -(mg10 * m.a + mg11 * m.b);
    let s11 = -(mg10 * m.b + mg11 * m.c);
    let g2 = [[s00, 0.5 * (s01 + s10)], [0.5 * (s01 + s10), s11]];

    // Σ₂D = J Σc Jᵀ: dΣc = Jᵀ G J, dJ = 2 G J Σc
    let jm = j.0;
    let mut d_cov_cam = [[0.0; 3]; 3];
    for (a, row) in d_cov_cam.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            *v = (0..2).map(|i| (0..2).map(|l| jm[i][a] * g2[i][l] * jm[l][b]).sum::<f64>()).sum();
        }
    }
    let mut d_j = [[0.0; 3]; 2];
    for (i, row) in d_j.iter_mut().enumerate() {
        for (a, v) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for l in 0..2 {
                for b in 0..3 {
                    acc += g2[i][l] * jm[l][b] * cov_cam.0[b][a];
                }
            }
            *v = 2.0 * acc;
        }
    }

    // Σc = W Σ Wᵀ
    let d_cov = w.transpose() * Mat3(d_cov_cam) * *w;
    // Σ = R diag(s²) Rᵀ: dR = 2 G R diag(s²), ds_k = 2 s_k r_kᵀ G r_k
    let gr = d_cov * r;
    let s2 = [sc.x * sc.x, sc.y * sc.y, sc.z * sc.z];
    let mut d_r = [[0.0; 3]; 3];
    for i in 0..3 {
        for jj in 0..3 {
            d_r[i][jj] = 2.0 * gr.0[i][jj] * s2[jj];
        }
    }
    let scales = [sc.x, sc.y, sc.z];
    for kk in 0..3 {
        let col = r.col(kk);
        let quad = col.dot(d_cov.mul_vec(col));
        let ds = 2.0 * scales[kk] * quad;
        let raw = ls[kk];
        out[7 + kk] = if (LOG_SCALE_MIN..=LOG_SCALE_MAX).contains(&raw) { ds * scales[kk] } else { 0.0 };
    }

    // R(q) for unit q = (w, x, y, z)
    let (qw, qx, qy, qz) = (qn.w, qn.x, qn.y, qn.z);
    let d = &d_r;
    let dw = 2.0 * (-qz * d[0][1] + qy * d[0][2] + qz * d[1][0] - qx * d[1][2] - qy * d[2][0] + qx * d[2][1]);
    let dx = 2.0
        * (qy * d[0][1] + qz * d[0][2] + qy * d[1][0] - 2.0 * qx * d[1][1] - qw * d[1][2] + qz * d[2][0]
            + qw * d[2][1]
            - 2.0 * qx * d[2][2]);
    let dy = 2.0
        * (-2.0 * qy * d[0][0] + qx * d[0][1] + qw * d[0][2] + qx * d[1][0] + qz * d[1][2] - qw * d[2][0]
            + qz * d[2][1]
            - 2.0 * qy * d[2][2]);
    let dz = 2.0
        * (-2.0 * qz * d[0][0] - qw * d[0][1] + qx * d[0][2] + qw * d[1][0] - 2.0 * qz * d[1][1] + qy * d[1][2]
            + qx * d[2][0]
            + qy * d[2][1]);
    let dq_n = [dw, dx, dy, dz];
    let u = qn.to_array();
    let dot: f64 = (0..4).map(|i| u[i] * dq_n[i]).sum();
    for i in 0..4 {
        out[3 + i] = (dq_n[i] - u[i] * dot) / qn_norm;
    }

    // Camera-frame position: through the 2D center and through J.
    let (fx, fy) = (cam.fx, cam.fy);
    let (xc, yc, zc) = (x_cam.x, x_cam.y, x_cam.z);
    let iz = 1.0 / zc;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let (gu, gv) = (g[0], g[1]);
    let gx = gu * fx * iz + d_j[0][2] * (-fx * iz2);
    let gy = gv * fy * iz + d_j[1][2] * (-fy * iz2);
    let gz = -gu * fx * xc * iz2 - gv * fy * yc * iz2 + d_j[0][0] * (-fx * iz2)
        + d_j[0][2] * (2.0 * fx * xc * iz3)
        + d_j[1][1] * (-fy * iz2)
        + d_j[1][2] * (2.0 * fy * yc * iz3);
    let d_mean = w.transpose().mul_vec(Vec3::new(gx, gy, gz));
    out[0..3].copy_from_slice(&d_mean.to_array());

    let o = s.opacity;
    out[10] = g[5] * o * (1.0 - o);
}

/// Gradients of `Σ upstream · output` with respect to every raw parameter of
/// `cloud`, packed per [`ParamLayout`]. Splats that were culled get zeros.
pub fn backward_rasterize(
    prep: &Prepared,
    cloud: &GaussianCloud,
    cam: &Camera,
    channels: &Channels,
    cfg: &RasterConfig,
    upstream: &RenderGrad,
) -> Result<Vec<f64>> {
    let n_px = prep.width as usize * prep.height as usize;
    let layout = PayloadLayout::new(cloud, channels)?;
    let check = |v: &Vec<f64>, per: usize, name: &str| -> Result<()> {
        if !v.is_empty() && v.len() != n_px * per {
            return Err(invalid(alloc::format!("upstream {name} gradient has the wrong size")));
        }
        Ok(())
    };
    check(&upstream.color, 3, "color")?;
    check(&upstream.features, layout.feature_dim, "feature")?;
    check(&upstream.segmentation, layout.num_classes, "segmentation")?;
    check(&upstream.alpha, 1, "alpha")?;

    let payload = layout.build(cloud, channels, &prep.splats);
    let stride = layout.stride;
    let width = SCREEN + stride;
    let tiles = par::map_range(prep.tile_count(), |t| tile_backward(prep, t, &payload, &layout, upstream, cfg));

    let mut screen = vec![0.0; prep.splats.len() * width];
    for (t, tile) in tiles.iter().enumerate() {
        for (li, &pos) in prep.tile_list(t).iter().enumerate() {
            let dst = &mut screen[pos as usize * width..(pos as usize + 1) * width];
            for (d, s) in dst.iter_mut().zip(&tile.grads[li * width..(li + 1) * width]) {
                *d += s;
            }
        }
    }

    let pl = ParamLayout::new(cloud.feature_dim);
    let ps = pl.stride();
    let rows = par::map_range(prep.splats.len(), |pos| {
        let s = &prep.splats[pos];
        let g = &screen[pos * width..(pos + 1) * width];
        let mut row = vec![0.0; ps];
        splat_backward(cloud, s, cam, g, &mut row);
        let k = s.index as usize;
        if let Some(o) = layout.color {
            let c = cloud.colors[k].to_array();
            for i in 0..3 {
                if (0.0..=1.0).contains(&c[i]) {
                    row[ParamLayout::COLOR + i] = g[SCREEN + o + i];
                }
            }
        }
        if let Some(o) = layout.features {
            let f = layout.feature_dim;
            row[ParamLayout::FEATURE..].copy_from_slice(&g[SCREEN + o..SCREEN + o + f]);
        }
        row
    });
    let mut out = vec![0.0; cloud.len() * ps];
    for (s, row) in prep.splats.iter().zip(rows) {
        let k = s.index as usize;
        out[k * ps..(k + 1) * ps].copy_from_slice(&row);
    }
    Ok(out)
}
