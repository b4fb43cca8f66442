use alloc::vec;
use alloc::vec::Vec;

use super::residual::{Backend, ParamLayout, ResidualField};
use crate::densify::PointCloud;
use crate::error::{Error, Result};
use crate::float;
use crate::geometry::{JointRotation6D, Vec3};
use crate::par;
use crate::rng::SampleStream;

/// Splats per gradient partial sum; partials are reduced in chunk order.
const GRAD_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    /// Frequency bands of the positional encoding of splat centers.
    pub pe_bands: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self { hidden: vec![128, 128], pe_bands: 10, seed: 0 }
    }
}

/// `[μ, sin(2^k π μ), cos(2^k π μ)]` for `k = 0 .. bands`, width `3 + 6·bands`.
pub fn positional_encoding(mu: Vec3, bands: usize, out: &mut Vec<f64>) {
    out.extend_from_slice(&mu.to_array());
    let mut freq = core::f64::consts::PI;
    for _ in 0..bands {
        for i in 0..3 {
            out.push(float::sin(freq * mu[i]));
        }
        for i in 0..3 {
            out.push(float::cos(freq * mu[i]));
        }
        freq *= 2.0;
    }
}

/// Pose-conditioned regressor of per-splat residuals.
///
/// Input per splat: the positional encoding of its center followed by the
/// flattened 6D joint rotations. Hidden layers use ReLU; the output layer is
/// linear and split according to [`ParamLayout`]. All weights live in one
/// flat vector: for each layer, a row-major `out × in` weight block followed
/// by `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationMLP {
    pub num_joints: usize,
    pub feature_dim: usize,
    pub pe_bands: usize,
    /// Layer widths including input and output.
    pub dims: Vec<usize>,
    pub params: Vec<f64>,
}

/// Activations saved by [`DeformationMLP::forward`] for the reverse pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Per splat: encoded input followed by each hidden layer's post-ReLU output.
    acts: Vec<f64>,
    act_width: usize,
    pose: Vec<f64>,
}

impl DeformationMLP {
    pub fn new(num_joints: usize, feature_dim: usize, cfg: &MlpConfig) -> Self {
        let layout = ParamLayout::new(feature_dim);
        let input = 3 + 6 * cfg.pe_bands + 6 * num_joints;
        let mut dims = vec![input];
        dims.extend_from_slice(&cfg.hidden);
        dims.push(layout.stride());
        let mut mlp = Self { num_joints, feature_dim, pe_bands: cfg.pe_bands, dims, params: Vec::new() };
        mlp.params = vec![0.0; mlp.param_count()];
        let mut rng = SampleStream::new(cfg.seed, 0x6d6c70);
        let layers = mlp.dims.len() - 1;
        for l in 0..layers - 1 {
            let (off, fan_in, fan_out) = (mlp.weight_offset(l), mlp.dims[l], mlp.dims[l + 1]);
            let bound = float::sqrt(6.0 / fan_in as f64);
            for w in &mut mlp.params[off..off + fan_in * fan_out] {
                *w = rng.uniform_range(-bound, bound);
            }
        }
        // Output layer stays zero so the initial residual is exactly zero.
        mlp
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn weight_offset(&self, layer: usize) -> usize {
        self.dims.windows(2).take(layer).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn bias_offset(&self, layer: usize) -> usize {
        self.weight_offset(layer) + self.dims[layer] * self.dims[layer + 1]
    }

    fn check(&self, pose: &[JointRotation6D]) -> Result<()> {
        if pose.len() != self.num_joints {
            return Err(Error::Config(alloc::format!(
                "MLP expects {} joint rotations, got {}",
                self.num_joints,
                pose.len()
            )));
        }
        let expected = 3 + 6 * self.pe_bands + 6 * self.num_joints;
        if self.dims.len() < 2
            || self.dims[0] != expected
            || self.output_dim() != ParamLayout::new(self.feature_dim).stride()
            || self.params.len() != self.param_count()
        {
            return Err(Error::Config("MLP widths do not match the configured architecture".into()));
        }
        Ok(())
    }

    fn pe_width(&self) -> usize {
        3 + 6 * self.pe_bands
    }

    /// Forward pass over all centers. Returns the residual field and the
    /// activations needed by [`DeformationMLP::backward`].
    pub fn forward(&self, pose: &[JointRotation6D], centers: &[Vec3]) -> Result<(ResidualField, MlpCache)> {
        self.check(pose)?;
        let pose_flat: Vec<f64> = pose.iter().flat_map(|w| w.0).collect();
        let layers = self.dims.len() - 1;
        let pe_w = self.pe_width();

        // The pose part of the first layer is shared by every splat.
        let (in0, out0) = (self.dims[0], self.dims[1]);
        let w0 = &self.params[self.weight_offset(0)..];
        let b0 = &self.params[self.bias_offset(0)..];
        let shared: Vec<f64> = (0..out0)
            .map(|o| b0[o] + (0..pose_flat.len()).map(|i| w0[o * in0 + pe_w + i] * pose_flat[i]).sum::<f64>())
            .collect();

        let act_width = pe_w + self.dims[1..layers].iter().sum::<usize>();
        let out_dim = self.output_dim();
        let rows = par::map_range(centers.len(), |k| {
            let mut acts = Vec::with_capacity(act_width);
            positional_encoding(centers[k], self.pe_bands, &mut acts);
            let mut start = 0;
            let mut width = pe_w;
            let mut out = vec![0.0; out_dim];
            for l in 0..layers {
                let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
                let w = &self.params[self.weight_offset(l)..];
                let b = &self.params[self.bias_offset(l)..];
                let last = l + 1 == layers;
                let mut next = Vec::with_capacity(fan_out);
                for o in 0..fan_out {
                    let row = &w[o * fan_in..o * fan_in + width];
                    let mut z = if l == 0 { shared[o] } else { b[o] };
                    for (wi, ai) in row.iter().zip(&acts[start..start + width]) {
                        z += wi * ai;
                    }
                    next.push(if last { z } else { z.max(0.0) });
                }
                if last {
                    out = next;
                } else {
                    start += width;
                    width = fan_out;
                    acts.extend_from_slice(&next);
                }
            }
            (acts, out)
        });

        let mut field = ResidualField::zeros(centers.len(), self.feature_dim, Backend::Mlp);
        let mut acts = Vec::with_capacity(centers.len() * act_width);
        for (k, (a, out)) in rows.into_iter().enumerate() {
            field.row_mut(k).copy_from_slice(&out);
            acts.extend_from_slice(&a);
        }
        Ok((field, MlpCache { acts, act_width, pose: pose_flat }))
    }

    /// Gradient of a loss with respect to all weights, given the gradient on
    /// the predicted residuals (same layout as the residual field).
    pub fn backward(&self, cache: &MlpCache, grad_out: &[f64]) -> Vec<f64> {
        let out_dim = self.output_dim();
        let n = grad_out.len() / out_dim;
        let chunks = n.div_ceil(GRAD_CHUNK);
        let partials = par::map_range(chunks, |c| {
            let mut g = vec![0.0; self.params.len()];
            for k in c * GRAD_CHUNK..((c + 1) * GRAD_CHUNK).min(n) {
                self.backward_one(cache, k, &grad_out[k * out_dim..(k + 1) * out_dim], &mut g);
            }
            g
        });
        let mut total = vec![0.0; self.params.len()];
        for p in partials {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
        total
    }

    fn backward_one(&self, cache: &MlpCache, k: usize, g_out: &[f64], grad: &mut [f64]) {
        let layers = self.dims.len() - 1;
        let acts = &cache.acts[k * cache.act_width..(k + 1) * cache.act_width];
        let pe_w = self.pe_width();
        // Offsets of each layer's input inside `acts` (layer 0 input is PE only).
        let mut starts = vec![0usize; layers];
        let mut widths = vec![pe_w; layers];
        for l in 1..layers {
            starts[l] = starts[l - 1] + widths[l - 1];
            widths[l] = self.dims[l];
        }
        let mut delta = g_out.to_vec();
        for l in (0..layers).rev() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let woff = self.weight_offset(l);
            let boff = self.bias_offset(l);
            let input = &acts[starts[l]..starts[l] + widths[l]];
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                grad[boff + o] += d;
                let row = &mut grad[woff + o * fan_in..woff + (o + 1) * fan_in];
                for (gw, a) in row.iter_mut().zip(input) {
                    *gw += d * a;
                }
                if l == 0 {
                    for (gw, p) in row[pe_w..].iter_mut().zip(&cache.pose) {
                        *gw += d * p;
                    }
                }
            }
            if l > 0 {
                let w = &self.params[woff..];
                let mut prev = vec![0.0; fan_in];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    for (p, wi) in prev.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                        *p += d * wi;
                    }
                }
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }
}

/// Predicts the residual field for `pcd` under `pose`.
pub fn mlp_predict_residuals(
    mlp: &DeformationMLP,
    pose: &[JointRotation6D],
    pcd: &PointCloud,
) -> Result<ResidualField> {
    Ok(mlp.forward(pose, &pcd.points)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_widths() {
        let mlp = DeformationMLP::new(5, 16, &MlpConfig::default());
        assert_eq!(mlp.dims, vec![63 + 30, 128, 128, 30]);
        assert_eq!(mlp.params.len(), mlp.param_count());
    }

    #[test]
    fn zero_output_layer_gives_zero_residuals() {
        let mlp = DeformationMLP::new(2, 4, &MlpConfig { hidden: vec![8], pe_bands: 2, seed: 1 });
        let pose = vec![JointRotation6D::identity(); 2];
        let pcd = PointCloud { points: vec![Vec3::new(0.3, -0.1, 1.0); 3], regions: vec![crate::densify::Region::Face; 3] };
        let r = mlp_predict_residuals(&mlp, &pose, &pcd).unwrap();
        assert!(r.data.iter().all(|&v| v == 0.0));
        assert_eq!(r.backend, Backend::Mlp);
    }

    #[test]
    fn pose_length_is_checked() {
        let mlp = DeformationMLP::new(2, 4, &MlpConfig { hidden: vec![8], pe_bands: 2, seed: 1 });
        assert!(matches!(mlp.forward(&[JointRotation6D::identity()], &[Vec3::ZERO]), Err(Error::Config(_))));
        let mut bad = mlp.clone();
        bad.dims[1] = 9;
        assert!(bad.forward(&[JointRotation6D::identity(); 2], &[Vec3::ZERO]).is_err());
    }
}
