//! Image losses and quality metrics.
//!
//! SSIM uses an 11×11 Gaussian window (σ = 1.5) evaluated only where the
//! window fits entirely inside the image, averaged over positions and
//! channels. Its gradient is computed in closed form.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::float;
use crate::image::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Default weight of the D-SSIM term.
pub const DEFAULT_LAMBDA: f64 = 0.2;

fn window_1d() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - r;
        *v = float::exp(-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Valid-mode separable filtering of an `h×w` plane.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w + 1 - SSIM_WINDOW;
    let oh = h + 1 - SSIM_WINDOW;
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * tmp[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: spreads an `(h-10)×(w-10)` map back onto `h×w`.
fn filter_valid_adjoint(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w + 1 - SSIM_WINDOW;
    let oh = h + 1 - SSIM_WINDOW;
    let mut tmp = vec![0.0; h * ow];
    for y in 0..oh {
        for x in 0..ow {
            let v = src[y * ow + x];
            for (i, kv) in k.iter().enumerate() {
                tmp[(y + i) * ow + x] += kv * v;
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..ow {
            let v = tmp[y * ow + x];
            for (i, kv) in k.iter().enumerate() {
                out[y * w + x + i] += kv * v;
            }
        }
    }
    out
}

fn check_pair(a: &Image, b: &Image) -> Result<()> {
    a.same_shape(b)?;
    if a.data.is_empty() {
        return Err(invalid("images are empty"));
    }
    Ok(())
}

fn ssim_impl(a: &Image, b: &Image, want_grad: bool) -> Result<(f64, Vec<f64>)> {
    check_pair(a, b)?;
    let (w, h, ch) = (a.width as usize, a.height as usize, a.channels);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(invalid("SSIM needs images of at least 11x11 pixels"));
    }
    let k = window_1d();
    let valid = (w + 1 - SSIM_WINDOW) * (h + 1 - SSIM_WINDOW);
    let norm = 1.0 / (valid * ch) as f64;
    let mut total = 0.0;
    let mut grad = if want_grad { vec![0.0; a.data.len()] } else { Vec::new() };
    for c in 0..ch {
        let x = a.plane(c);
        let y = b.plane(c);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let mx = filter_valid(&x, w, h, &k);
        let my = filter_valid(&y, w, h, &k);
        let exx = filter_valid(&xx, w, h, &k);
        let eyy = filter_valid(&yy, w, h, &k);
        let exy = filter_valid(&xy, w, h, &k);
        let mut g_mu = if want_grad { vec![0.0; valid] } else { Vec::new() };
        let mut g_xx = g_mu.clone();
        let mut g_xy = g_mu.clone();
        for p in 0..valid {
            let (ux, uy) = (mx[p], my[p]);
            let vx = exx[p] - ux * ux;
            let vy = eyy[p] - uy * uy;
            let vxy = exy[p] - ux * uy;
            let a1 = 2.0 * ux * uy + C1;
            let a2 = 2.0 * vxy + C2;
            let b1 = ux * ux + uy * uy + C1;
            let b2 = vx + vy + C2;
            let s = (a1 * a2) / (b1 * b2);
            total += s;
            if want_grad {
                // Grouped so that identical inputs give an exactly zero gradient.
                g_mu[p] = 2.0 * s * ((uy / a1 - ux / b1) - (uy / a2 - ux / b2)) * norm;
                g_xx[p] = -s / b2 * norm;
                g_xy[p] = 2.0 * s / a2 * norm;
            }
        }
        if want_grad {
            let d_mu = filter_valid_adjoint(&g_mu, w, h, &k);
            let d_xx = filter_valid_adjoint(&g_xx, w, h, &k);
            let d_xy = filter_valid_adjoint(&g_xy, w, h, &k);
            for q in 0..w * h {
                grad[q * ch + c] = d_mu[q] + 2.0 * d_xx[q] * x[q] + d_xy[q] * y[q];
            }
        }
    }
    Ok((total * norm, grad))
}

/// Mean structural similarity of two same-shaped images.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    Ok(ssim_impl(a, b, false)?.0)
}

/// SSIM and its gradient with respect to `a`.
pub fn ssim_grad(a: &Image, b: &Image) -> Result<(f64, Vec<f64>)> {
    ssim_impl(a, b, true)
}

/// `(1 - SSIM) / 2`.
pub fn dssim(a: &Image, b: &Image) -> Result<f64> {
    Ok((1.0 - ssim(a, b)?) / 2.0)
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_pair(a, b)?;
    let s: f64 = a.data.iter().zip(&b.data).map(|(p, q)| (p - q) * (p - q)).sum();
    Ok(s / a.data.len() as f64)
}

/// `10·log10(1 / MSE)` for unit peak; `+∞` when the images are identical.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * float::log10(m))
}

/// Mean absolute error.
pub fn l1(a: &Image, b: &Image) -> Result<f64> {
    check_pair(a, b)?;
    let s: f64 = a.data.iter().zip(&b.data).map(|(p, q)| (p - q).abs()).sum();
    Ok(s / a.data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub l1: f64,
    pub dssim: f64,
    pub total: f64,
    pub lambda: f64,
}

impl LossReport {
    fn compose(l1: f64, dssim: f64, lambda: f64) -> Self {
        Self { l1, dssim, total: (1.0 - lambda) * l1 + lambda * dssim, lambda }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(invalid("lambda must lie in [0, 1]"));
    }
    Ok(())
}

/// `(1-λ)·L1 + λ·D-SSIM`.
pub fn step1_loss(pred: &Image, target: &Image, lambda: f64) -> Result<LossReport> {
    check_lambda(lambda)?;
    let l = l1(pred, target)?;
    let d = if lambda > 0.0 { dssim(pred, target)? } else { (1.0 - ssim(pred, target).unwrap_or(1.0)) / 2.0 };
    Ok(LossReport::compose(l, d, lambda))
}

/// [`step1_loss`] and its gradient with respect to `pred`.
pub fn step1_loss_grad(pred: &Image, target: &Image, lambda: f64) -> Result<(LossReport, Vec<f64>)> {
    check_lambda(lambda)?;
    let l = l1(pred, target)?;
    let (s, gs) = ssim_grad(pred, target)?;
    let n = pred.data.len() as f64;
    let grad = pred
        .data
        .iter()
        .zip(&target.data)
        .zip(&gs)
        .map(|((p, t), g)| {
            let sign = if p > t {
                1.0
            } else if p < t {
                -1.0
            } else {
                0.0
            };
            (1.0 - lambda) * sign / n - lambda * 0.5 * g
        })
        .collect();
    Ok((LossReport::compose(l, (1.0 - s) / 2.0, lambda), grad))
}
