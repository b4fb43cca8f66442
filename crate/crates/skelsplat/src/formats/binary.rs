//! Little-endian binary containers: splat checkpoints, float image dumps and
//! optimizer state. Each starts with a 4-byte magic and a `u32` version.

use std::path::Path;

use skelsplat_core::gaussian::GaussianCloud;
use skelsplat_core::geometry::{Quat, Vec3};
use skelsplat_core::optim::FitState;

use crate::error::{IoError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GSCK";
pub const DUMP_MAGIC: &[u8; 4] = b"GSFD";
pub const FIT_STATE_MAGIC: &[u8; 4] = b"GSFS";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn new(magic: &[u8; 4]) -> Self {
        let mut w = Writer(magic.to_vec());
        w.u32(VERSION);
        w
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f64) {
        self.0.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

struct Reader<'a> {
    path: &'a Path,
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(path: &'a Path, data: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        let mut r = Reader { path, data, pos: 0 };
        if r.take(4)? != magic {
            return Err(IoError::format(path, format!("not a {} file", String::from_utf8_lossy(magic))));
        }
        let v = r.u32()?;
        if v != VERSION {
            return Err(IoError::format(path, format!("unsupported version {v}")));
        }
        Ok(r)
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let Some(end) = end else {
            return Err(IoError::format(self.path, "file is truncated"));
        };
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if n.checked_mul(8).is_none_or(|b| b > self.data.len() - self.pos) {
            return Err(IoError::format(self.path, "file is truncated"));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn finish(self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(IoError::format(self.path, "trailing bytes after the payload"));
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| IoError::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}

/// Checkpoint bytes: header `N, F, sh_degree` (u32), then per splat
/// `mean[3], rotation[4] (w,x,y,z), log_scale[3], opacity_logit, color[3],
/// feature[F]` as f64.
pub fn encode_checkpoint(cloud: &GaussianCloud) -> Vec<u8> {
    let mut w = Writer::new(CHECKPOINT_MAGIC);
    w.u32(cloud.len() as u32);
    w.u32(cloud.feature_dim as u32);
    w.u32(cloud.sh_degree as u32);
    for k in 0..cloud.len() {
        let q = cloud.rotations[k];
        for v in cloud.means[k].to_array().into_iter().chain([q.w, q.x, q.y, q.z]).chain(cloud.log_scales[k].to_array()) {
            w.f64(v);
        }
        w.f64(cloud.opacity_logits[k]);
        for v in cloud.colors[k].to_array().into_iter().chain(cloud.feature(k).iter().copied()) {
            w.f64(v);
        }
    }
    w.0
}

pub fn decode_checkpoint(path: &Path, bytes: &[u8]) -> Result<GaussianCloud> {
    let mut r = Reader::new(path, bytes, CHECKPOINT_MAGIC)?;
    let n = r.u32()? as usize;
    let f = r.u32()? as usize;
    let sh = r.u32()?;
    if sh > u8::MAX as u32 {
        return Err(IoError::format(path, format!("invalid SH degree {sh}")));
    }
    let values = r.f64s(n.saturating_mul(14 + f))?;
    r.finish()?;
    let mut cloud = GaussianCloud::empty(f);
    cloud.sh_degree = sh as u8;
    for row in values.chunks_exact(14 + f) {
        cloud.means.push(Vec3::new(row[0], row[1], row[2]));
        cloud.rotations.push(Quat::new(row[3], row[4], row[5], row[6]));
        cloud.log_scales.push(Vec3::new(row[7], row[8], row[9]));
        cloud.opacity_logits.push(row[10]);
        cloud.colors.push(Vec3::new(row[11], row[12], row[13]));
        cloud.features.extend_from_slice(&row[14..]);
    }
    cloud.validate().map_err(|e| IoError::format(path, e.to_string()))?;
    Ok(cloud)
}

pub fn save_checkpoint(path: &Path, cloud: &GaussianCloud) -> Result<()> {
    write(path, &encode_checkpoint(cloud))
}

pub fn load_checkpoint(path: &Path) -> Result<GaussianCloud> {
    decode_checkpoint(path, &read(path)?)
}

/// Float dump: `H, W, C` (u32), then `C` planes of `H×W` f32, row-major.
/// `data` is interleaved `H×W×C`.
pub fn save_dump(path: &Path, width: u32, height: u32, channels: usize, data: &[f64]) -> Result<()> {
    assert_eq!(data.len(), width as usize * height as usize * channels);
    let mut w = Writer::new(DUMP_MAGIC);
    w.u32(height);
    w.u32(width);
    w.u32(channels as u32);
    for c in 0..channels {
        for v in data.iter().skip(c).step_by(channels.max(1)) {
            w.f32(*v);
        }
    }
    write(path, &w.0)
}

/// Returns `(width, height, channels, interleaved data)`.
pub fn load_dump(path: &Path) -> Result<(u32, u32, usize, Vec<f64>)> {
    let bytes = read(path)?;
    let mut r = Reader::new(path, &bytes, DUMP_MAGIC)?;
    let h = r.u32()?;
    let w = r.u32()?;
    let c = r.u32()? as usize;
    let n = w as usize * h as usize;
    let raw = r.take(n.saturating_mul(c).saturating_mul(4))?;
    r.finish()?;
    let mut data = vec![0.0; n * c];
    for (i, b) in raw.chunks_exact(4).enumerate() {
        let (plane, p) = (i / n.max(1), i % n.max(1));
        data[p * c + plane] = f32::from_le_bytes(b.try_into().unwrap()) as f64;
    }
    Ok((w, h, c, data))
}

/// Optimizer state: `step` (u64), `lambda` (f64), `n` (u64), then `params`,
/// `lr`, `m`, `v` as `n` f64 each.
pub fn encode_fit_state(s: &FitState) -> Vec<u8> {
    let mut w = Writer::new(FIT_STATE_MAGIC);
    w.u64(s.step);
    w.f64(s.lambda);
    w.u64(s.params.len() as u64);
    for arr in [&s.params, &s.lr, &s.m, &s.v] {
        for &v in arr.iter() {
            w.f64(v);
        }
    }
    w.0
}

pub fn decode_fit_state(path: &Path, bytes: &[u8]) -> Result<FitState> {
    let mut r = Reader::new(path, bytes, FIT_STATE_MAGIC)?;
    let step = r.u64()?;
    let lambda = r.f64()?;
    let n = usize::try_from(r.u64()?).map_err(|_| IoError::format(path, "parameter count overflows"))?;
    let params = r.f64s(n)?;
    let lr = r.f64s(n)?;
    let m = r.f64s(n)?;
    let v = r.f64s(n)?;
    r.finish()?;
    Ok(FitState { params, lr, m, v, step, lambda })
}

pub fn save_fit_state(path: &Path, s: &FitState) -> Result<()> {
    write(path, &encode_fit_state(s))
}

pub fn load_fit_state(path: &Path) -> Result<FitState> {
    decode_fit_state(path, &read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> GaussianCloud {
        let mut c = GaussianCloud::empty(2);
        c.means = vec![Vec3::new(0.1, -0.2, 3.0), Vec3::new(1.0, 2.0, 3.0)];
        c.rotations = vec![Quat::IDENTITY, Quat::new(0.1, 0.2, 0.3, 0.4)];
        c.log_scales = vec![Vec3::splat(-3.0), Vec3::new(-1.0, -2.0, -4.5)];
        c.opacity_logits = vec![0.25, -1.0];
        c.colors = vec![Vec3::splat(0.5), Vec3::new(1.2, -0.1, 0.3)];
        c.features = vec![1.0, 2.0, 3.0, 4.0];
        c
    }

    #[test]
    fn checkpoint_round_trip() {
        let c = cloud();
        let bytes = encode_checkpoint(&c);
        assert_eq!(&bytes[..4], b"GSCK");
        assert_eq!(bytes.len(), 8 + 12 + 2 * 16 * 8);
        assert_eq!(decode_checkpoint(Path::new("x"), &bytes).unwrap(), c);
        assert!(decode_checkpoint(Path::new("x"), &bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(decode_checkpoint(Path::new("x"), &bad).is_err());
    }

    #[test]
    fn fit_state_round_trip() {
        let mut s = FitState::with_uniform_lr(vec![1.0, 2.0, 3.0], 0.1, 0.2);
        s.step = 7;
        s.m = vec![0.5, 0.25, 0.125];
        let bytes = encode_fit_state(&s);
        assert_eq!(decode_fit_state(Path::new("x"), &bytes).unwrap(), s);
        assert!(decode_fit_state(Path::new("x"), &bytes[..20]).is_err());
    }
}
