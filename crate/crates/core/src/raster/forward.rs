use alloc::vec;
use alloc::vec::Vec;

use super::project::{project_splat, ProjectedSplat};
use super::{Channels, RasterConfig, RenderOutput};
use crate::error::{invalid, Result};
use crate::float;
use crate::gaussian::GaussianCloud;
use crate::geometry::{Camera, Vec2};
use crate::par;

/// Projected, sorted and binned splats for one camera.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub width: u32,
    pub height: u32,
    pub tile_size: u32,
    pub tiles_x: u32,
    pub tiles_y: u32,
    /// Survivors in compositing order: ascending depth, ties by splat index.
    pub splats: Vec<ProjectedSplat>,
    /// CSR offsets into `tile_entries`, one range per tile in row-major tile order.
    pub tile_offsets: Vec<u32>,
    /// Positions in `splats`, ascending within each tile.
    pub tile_entries: Vec<u32>,
}

impl Prepared {
    pub fn new(cloud: &GaussianCloud, cam: &Camera, cfg: &RasterConfig) -> Result<Self> {
        cloud.validate()?;
        cam.validate()?;
        if cfg.tile_size == 0 {
            return Err(invalid("tile size must be positive"));
        }
        let projected = par::map_range(cloud.len(), |k| -> Result<Option<ProjectedSplat>> {
            let cov = cloud.covariance(k)?;
            Ok(project_splat(k, cloud.means[k], &cov, cloud.opacity(k), cam, cfg))
        });
        let mut splats = Vec::with_capacity(cloud.len());
        for p in projected {
            if let Some(p) = p? {
                splats.push(p);
            }
        }
        splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
        Ok(Self::bin(splats, cam.width, cam.height, cfg.tile_size))
    }

    /// Bins pre-sorted splats into tiles.
    pub fn bin(splats: Vec<ProjectedSplat>, width: u32, height: u32, tile_size: u32) -> Self {
        let tiles_x = width.div_ceil(tile_size);
        let tiles_y = height.div_ceil(tile_size);
        let n_tiles = (tiles_x * tiles_y) as usize;
        let ranges: Vec<Option<(u32, u32, u32, u32)>> = splats
            .iter()
            .map(|s| {
                s.pixel_bounds(width, height)
                    .map(|(x0, y0, x1, y1)| (x0 / tile_size, y0 / tile_size, x1 / tile_size, y1 / tile_size))
            })
            .collect();
        let mut counts = vec![0u32; n_tiles + 1];
        for (tx0, ty0, tx1, ty1) in ranges.iter().flatten() {
            for ty in *ty0..=*ty1 {
                for tx in *tx0..=*tx1 {
                    counts[(ty * tiles_x + tx) as usize + 1] += 1;
                }
            }
        }
        for t in 0..n_tiles {
            counts[t + 1] += counts[t];
        }
        let mut fill = counts.clone();
        let mut entries = vec![0u32; counts[n_tiles] as usize];
        for (pos, r) in ranges.iter().enumerate() {
            if let Some((tx0, ty0, tx1, ty1)) = *r {
                for ty in ty0..=ty1 {
                    for tx in tx0..=tx1 {
                        let t = (ty * tiles_x + tx) as usize;
                        entries[fill[t] as usize] = pos as u32;
                        fill[t] += 1;
                    }
                }
            }
        }
        Self { width, height, tile_size, tiles_x, tiles_y, splats, tile_offsets: counts, tile_entries: entries }
    }

    pub(crate) fn footprint(&self, pos: usize) -> Footprint {
        Footprint::new(&self.splats[pos], self.width, self.height)
    }

    pub fn tile_count(&self) -> usize {
        (self.tiles_x * self.tiles_y) as usize
    }

    pub fn tile_list(&self, t: usize) -> &[u32] {
        &self.tile_entries[self.tile_offsets[t] as usize..self.tile_offsets[t + 1] as usize]
    }

    /// Pixel rectangle `(x0, y0, x1, y1)` (exclusive end) of tile `t`.
    pub fn tile_rect(&self, t: usize) -> (u32, u32, u32, u32) {
        let (tx, ty) = (t as u32 % self.tiles_x, t as u32 / self.tiles_x);
        let x0 = tx * self.tile_size;
        let y0 = ty * self.tile_size;
        (x0, y0, (x0 + self.tile_size).min(self.width), (y0 + self.tile_size).min(self.height))
    }
}

/// The fields of a projected splat that per-pixel evaluation touches, packed
/// for cache locality.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Footprint {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b2: f64,
    pub c: f64,
    pub opacity: f64,
    pub cutoff: f64,
    /// Inclusive pixel bounds; outside them alpha is below the skip threshold.
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Footprint {
    pub fn new(s: &ProjectedSplat, width: u32, height: u32) -> Self {
        let (x0, y0, x1, y1) = s.pixel_bounds(width, height).unwrap_or((1, 1, 0, 0));
        Self {
            cx: s.center.x,
            cy: s.center.y,
            a: s.conic.a,
            b2: 2.0 * s.conic.b,
            c: s.conic.c,
            opacity: s.opacity,
            cutoff: s.cutoff,
            x0,
            y0,
            x1,
            y1,
        }
    }

    /// `(alpha, gaussian, clamped)` at pixel `(px, py)`, or `None` when skipped.
    #[inline(always)]
    pub fn alpha_at(&self, px: u32, py: u32, cfg: &RasterConfig) -> Option<(f64, f64, bool)> {
        if px < self.x0 || px > self.x1 || py < self.y0 || py > self.y1 {
            return None;
        }
        self.alpha_at_f(px as f64, py as f64, cfg)
    }

    #[inline(always)]
    pub fn alpha_at_f(&self, px: f64, py: f64, cfg: &RasterConfig) -> Option<(f64, f64, bool)> {
        let dx = px - self.cx;
        let dy = py - self.cy;
        let q = self.a * dx * dx + self.b2 * dx * dy + self.c * dy * dy;
        if q > self.cutoff {
            return None;
        }
        let g = float::exp(-0.5 * q);
        let raw = self.opacity * g;
        let (alpha, clamped) = if raw > cfg.alpha_max { (cfg.alpha_max, true) } else { (raw, false) };
        if alpha < cfg.alpha_min {
            return None;
        }
        Some((alpha, g, clamped))
    }
}

/// Front-to-back compositing of `splats` at one pixel.
///
/// `payload` holds `stride` values per splat, row `k` belonging to
/// `splats[k]`. Returns the composited payload (without background) and the
/// accumulated alpha.
pub fn composite_pixel(
    pixel: Vec2,
    splats: &[ProjectedSplat],
    payload: &[f64],
    stride: usize,
    cfg: &RasterConfig,
) -> (Vec<f64>, f64) {
    let mut value = vec![0.0; stride];
    let mut t = 1.0;
    for (k, s) in splats.iter().enumerate() {
        let fp = Footprint::new(s, u32::MAX, u32::MAX);
        let Some((alpha, _, _)) = fp.alpha_at_f(pixel.x, pixel.y, cfg) else { continue };
        let w = alpha * t;
        for (v, p) in value.iter_mut().zip(&payload[k * stride..(k + 1) * stride]) {
            *v += w * p;
        }
        t *= 1.0 - alpha;
        if t < cfg.transmittance_min {
            break;
        }
    }
    (value, 1.0 - t)
}

pub(crate) struct PayloadLayout {
    pub stride: usize,
    pub color: Option<usize>,
    pub features: Option<usize>,
    pub segmentation: Option<usize>,
    pub feature_dim: usize,
    pub num_classes: usize,
}

impl PayloadLayout {
    pub fn new(cloud: &GaussianCloud, ch: &Channels) -> Result<Self> {
        let mut stride = 0;
        let color = ch.color.then(|| {
            stride += 3;
            0
        });
        let features = ch.features.then(|| {
            let off = stride;
            stride += cloud.feature_dim;
            off
        });
        let mut num_classes = 0;
        let segmentation = match ch.segmentation {
            Some(seg) => {
                if seg.labels.len() != cloud.len() {
                    return Err(invalid("one segmentation label per splat is required"));
                }
                if let Some(bad) = seg.labels.iter().find(|&&l| l as usize >= seg.num_classes) {
                    return Err(crate::Error::Data(alloc::format!(
                        "splat label {bad} outside [0, {})",
                        seg.num_classes
                    )));
                }
                num_classes = seg.num_classes;
                let off = stride;
                stride += seg.num_classes;
                Some(off)
            }
            None => None,
        };
        Ok(Self { stride, color, features, segmentation, feature_dim: cloud.feature_dim, num_classes })
    }

    /// Payload rows in compositing order.
    pub fn build(&self, cloud: &GaussianCloud, ch: &Channels, splats: &[ProjectedSplat]) -> Vec<f64> {
        let mut out = vec![0.0; splats.len() * self.stride];
        for (pos, s) in splats.iter().enumerate() {
            let k = s.index as usize;
            let row = &mut out[pos * self.stride..(pos + 1) * self.stride];
            if let Some(o) = self.color {
                let c = cloud.colors[k];
                row[o] = c.x.clamp(0.0, 1.0);
                row[o + 1] = c.y.clamp(0.0, 1.0);
                row[o + 2] = c.z.clamp(0.0, 1.0);
            }
            if let Some(o) = self.features {
                row[o..o + self.feature_dim].copy_from_slice(cloud.feature(k));
            }
            if let (Some(o), Some(seg)) = (self.segmentation, ch.segmentation) {
                row[o + seg.labels[k] as usize] = 1.0;
            }
        }
        out
    }
}

struct TileOut {
    values: Vec<f64>,
    alpha: Vec<f64>,
    count: Vec<u32>,
}

fn render_tile(prep: &Prepared, t: usize, payload: &[f64], stride: usize, cfg: &RasterConfig) -> TileOut {
    let (x0, y0, x1, y1) = prep.tile_rect(t);
    let n_px = ((x1 - x0) * (y1 - y0)) as usize;
    let mut out = TileOut { values: vec![0.0; n_px * stride], alpha: vec![0.0; n_px], count: vec![0; n_px] };
    let list = prep.tile_list(t);
    if list.is_empty() {
        return out;
    }
    let feet: Vec<Footprint> = list.iter().map(|&pos| prep.footprint(pos as usize)).collect();
    let mut i = 0;
    for py in y0..y1 {
        for px in x0..x1 {
            let acc = &mut out.values[i * stride..(i + 1) * stride];
            let mut trans = 1.0;
            let mut n = 0;
            for (&pos, fp) in list.iter().zip(&feet) {
                let Some((alpha, _, _)) = fp.alpha_at(px, py, cfg) else { continue };
                let w = alpha * trans;
                let row = &payload[pos as usize * stride..(pos as usize + 1) * stride];
                for (a, p) in acc.iter_mut().zip(row) {
                    *a += w * p;
                }
                trans *= 1.0 - alpha;
                n += 1;
                if trans < cfg.transmittance_min {
                    break;
                }
            }
            out.alpha[i] = 1.0 - trans;
            out.count[i] = n;
            i += 1;
        }
    }
    out
}

/// Renders the requested channels of an already-prepared frame.
pub fn rasterize_prepared(
    prep: &Prepared,
    cloud: &GaussianCloud,
    channels: &Channels,
    cfg: &RasterConfig,
) -> Result<RenderOutput> {
    let layout = PayloadLayout::new(cloud, channels)?;
    let payload = layout.build(cloud, channels, &prep.splats);
    let stride = layout.stride;
    let tiles = par::map_range(prep.tile_count(), |t| render_tile(prep, t, &payload, stride, cfg));

    let (w, h) = (prep.width as usize, prep.height as usize);
    let n = w * h;
    let mut out = RenderOutput {
        width: prep.width,
        height: prep.height,
        color: if layout.color.is_some() { vec![0.0; n * 3] } else { Vec::new() },
        feature_dim: if layout.features.is_some() { layout.feature_dim } else { 0 },
        features: if layout.features.is_some() { vec![0.0; n * layout.feature_dim] } else { Vec::new() },
        num_classes: layout.num_classes,
        segmentation: vec![0.0; n * layout.num_classes],
        alpha: vec![0.0; n],
        contributors: vec![0; n],
    };
    let bg = cfg.background;
    for (t, tile) in tiles.into_iter().enumerate() {
        let (x0, y0, x1, y1) = prep.tile_rect(t);
        let mut i = 0;
        for py in y0 as usize..y1 as usize {
            for px in x0 as usize..x1 as usize {
                let p = py * w + px;
                let vals = &tile.values[i * stride..(i + 1) * stride];
                let trans = 1.0 - tile.alpha[i];
                out.alpha[p] = tile.alpha[i];
                out.contributors[p] = tile.count[i];
                if let Some(o) = layout.color {
                    out.color[p * 3] = vals[o] + trans * bg.x;
                    out.color[p * 3 + 1] = vals[o + 1] + trans * bg.y;
                    out.color[p * 3 + 2] = vals[o + 2] + trans * bg.z;
                }
                if let Some(o) = layout.features {
                    let f = layout.feature_dim;
                    out.features[p * f..(p + 1) * f].copy_from_slice(&vals[o..o + f]);
                }
                if let Some(o) = layout.segmentation {
                    let c = layout.num_classes;
                    out.segmentation[p * c..(p + 1) * c].copy_from_slice(&vals[o..o + c]);
                }
                i += 1;
            }
        }
    }
    Ok(out)
}

/// Projects, sorts, bins and composites `cloud` as seen by `cam`.
pub fn rasterize(cloud: &GaussianCloud, cam: &Camera, channels: &Channels, cfg: &RasterConfig) -> Result<RenderOutput> {
    let prep = Prepared::new(cloud, cam, cfg)?;
    rasterize_prepared(&prep, cloud, channels, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Mat2, Mat3, Quat, Vec3, DEFAULT_NEAR};

    fn proj(center: Vec2, opacity: f64, depth: f64, index: u32) -> ProjectedSplat {
        let cov2d = Mat2::new(4.0, 0.0, 4.0);
        ProjectedSplat {
            index,
            center,
            depth,
            cov2d,
            conic: cov2d.inverse().unwrap(),
            opacity,
            cutoff: 2.0 * float::ln(opacity * 255.0) + 1e-9,
            half_extent: Vec2::new(100.0, 100.0),
        }
    }

    #[test]
    fn single_saturated_splat_is_clamped() {
        let cfg = RasterConfig::default();
        let s = [proj(Vec2::new(3.0, 3.0), 1.0, 1.0, 0)];
        let (v, a) = composite_pixel(Vec2::new(3.0, 3.0), &s, &[0.8, 0.4], 2, &cfg);
        assert!((v[0] - 0.99 * 0.8).abs() < 1e-15 && (v[1] - 0.99 * 0.4).abs() < 1e-15);
        assert!((a - 0.99).abs() < 1e-15);
    }

    #[test]
    fn two_splat_expansion() {
        let cfg = RasterConfig::default();
        let s = [proj(Vec2::new(0.0, 0.0), 0.6, 1.0, 0), proj(Vec2::new(0.0, 0.0), 0.3, 2.0, 1)];
        let (v, a) = composite_pixel(Vec2::new(0.0, 0.0), &s, &[0.2, 0.9], 1, &cfg);
        assert!((v[0] - (0.2 * 0.6 + 0.9 * 0.3 * 0.4)).abs() < 1e-15);
        assert!((a - (1.0 - 0.4 * 0.7)).abs() < 1e-15);
    }

    #[test]
    fn empty_cloud_renders_black() {
        let cam = Camera::new(50.0, 50.0, 8.0, 8.0, Mat3::IDENTITY, Vec3::ZERO, 17, 17, DEFAULT_NEAR).unwrap();
        let out = rasterize(&GaussianCloud::empty(4), &cam, &Channels::ALL_DENSE, &RasterConfig::default()).unwrap();
        assert!(out.color.iter().chain(&out.alpha).chain(&out.features).all(|&v| v == 0.0));
        assert_eq!(out.features.len(), 17 * 17 * 4);
    }

    #[test]
    fn large_opaque_splat_covers_frame() {
        let cam = Camera::new(50.0, 50.0, 16.0, 16.0, Mat3::IDENTITY, Vec3::ZERO, 32, 32, DEFAULT_NEAR).unwrap();
        let cloud = GaussianCloud {
            means: vec![Vec3::new(0.0, 0.0, 5.0)],
            rotations: vec![Quat::IDENTITY],
            log_scales: vec![Vec3::splat(float::ln(50.0))],
            opacity_logits: vec![20.0],
            colors: vec![Vec3::new(0.2, 0.4, 0.6)],
            features: vec![],
            feature_dim: 0,
            sh_degree: 0,
        };
        let out = rasterize(&cloud, &cam, &Channels::COLOR, &RasterConfig::default()).unwrap();
        for p in 0..out.pixel_count() {
            assert!((out.alpha[p] - 0.99).abs() < 1e-12);
            assert!((out.color[p * 3 + 2] - 0.99 * 0.6).abs() < 1e-12);
        }
    }
}
