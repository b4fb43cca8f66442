//! A two-bone articulated capsule template with exact ray-cast label images.

use alloc::vec;
use alloc::vec::Vec;

use super::{rotation_about, BoneTransforms, CanonicalTemplate};
use crate::error::Result;
use crate::float;
use crate::geometry::{Camera, Mat4, Quat, Vec3};

/// Two capsules meeting at the origin: bone 0 (class 0) along `-y`, bone 1
/// (class 1) along `+y`. Bending rotates bone 1 about the `z` axis.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoBoneFixture {
    pub length: f64,
    pub radius: f64,
    /// Vertex rings along each cylinder.
    pub rings: usize,
    /// Vertices per ring.
    pub around: usize,
    /// Half-width of the band around the joint in which weights blend.
    pub blend: f64,
}

impl Default for TwoBoneFixture {
    fn default() -> Self {
        Self { length: 0.6, radius: 0.12, rings: 24, around: 24, blend: 0.04 }
    }
}

impl TwoBoneFixture {
    fn axis_end(&self, bone: usize) -> Vec3 {
        let sign = if bone == 0 { -1.0 } else { 1.0 };
        Vec3::new(0.0, sign * self.length, 0.0)
    }

    /// Capsule surface samples: cylinder rings plus a hemispherical cap at
    /// each end of both bones.
    pub fn template(&self) -> CanonicalTemplate {
        let mut vertices = Vec::new();
        let mut labels = Vec::new();
        let tau = 2.0 * core::f64::consts::PI;
        let cap_rings = (self.rings / 4).max(2);
        for bone in 0..2usize {
            let sign = if bone == 0 { -1.0 } else { 1.0 };
            let mut push = |p: Vec3| {
                vertices.push(p);
                labels.push(bone as u32);
            };
            for i in 0..self.rings {
                let y = sign * self.length * (i as f64 + 0.5) / self.rings as f64;
                let phase = if i % 2 == 0 { 0.0 } else { 0.5 };
                for j in 0..self.around {
                    let a = tau * (j as f64 + phase) / self.around as f64;
                    push(Vec3::new(self.radius * float::cos(a), y, self.radius * float::sin(a)));
                }
            }
            for (end_y, dir) in [(0.0, -sign), (sign * self.length, sign)] {
                for i in 0..cap_rings {
                    let polar = (i as f64 + 0.5) / cap_rings as f64 * core::f64::consts::FRAC_PI_2;
                    let ring_r = self.radius * float::cos(polar);
                    let dy = self.radius * float::sin(polar) * dir;
                    let count = (libm::round(self.around as f64 * float::cos(polar)) as usize).max(3);
                    for j in 0..count {
                        let a = tau * j as f64 / count as f64;
                        push(Vec3::new(ring_r * float::cos(a), end_y + dy, ring_r * float::sin(a)));
                    }
                }
            }
        }
        let weights = vertices
            .iter()
            .flat_map(|v| {
                let w1 = ((v.y + self.blend) / (2.0 * self.blend)).clamp(0.0, 1.0);
                [1.0 - w1, w1]
            })
            .collect();
        CanonicalTemplate { vertices, weights, labels, bone_parents: vec![None, Some(0)], num_classes: 2 }
    }

    /// Bone 0 fixed, bone 1 rotated by `bend` radians about the joint.
    pub fn bones(&self, bend: f64) -> Result<BoneTransforms> {
        let q = Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), bend);
        Ok(BoneTransforms(vec![Mat4::IDENTITY, rotation_about(Vec3::ZERO, q)?]))
    }

    /// Exact label image of the rigidly posed capsules: `0` for background,
    /// `k + 1` where the first surface hit belongs to bone `k`.
    pub fn label_image(&self, cam: &Camera, bend: f64) -> Result<Vec<u32>> {
        let bones = self.bones(bend)?;
        let caps: Vec<(Vec3, Vec3)> = (0..2)
            .map(|b| {
                let m = &bones.0[b];
                (m.transform_point(Vec3::ZERO), m.transform_point(self.axis_end(b)))
            })
            .collect();
        let origin = cam.camera_to_world(Vec3::ZERO);
        let rt = cam.rotation.transpose();
        let mut out = Vec::with_capacity(cam.width as usize * cam.height as usize);
        for py in 0..cam.height {
            for px in 0..cam.width {
                let d = Vec3::new((px as f64 - cam.cx) / cam.fx, (py as f64 - cam.cy) / cam.fy, 1.0);
                let dir = rt.mul_vec(d).normalized();
                let mut best = (f64::INFINITY, 0u32);
                for (b, &(pa, pb)) in caps.iter().enumerate() {
                    if let Some(t) = capsule_hit(origin, dir, pa, pb, self.radius) {
                        if t < best.0 {
                            best = (t, b as u32 + 1);
                        }
                    }
                }
                out.push(best.1);
            }
        }
        Ok(out)
    }
}

/// Distance along the unit ray `ro + t·rd` to the first hit with the capsule
/// of radius `r` around segment `pa`-`pb`, if it lies in front of `ro`.
pub fn capsule_hit(ro: Vec3, rd: Vec3, pa: Vec3, pb: Vec3, r: f64) -> Option<f64> {
    let ba = pb - pa;
    let oa = ro - pa;
    let baba = ba.dot(ba);
    let bard = ba.dot(rd);
    let baoa = ba.dot(oa);
    let rdoa = rd.dot(oa);
    let oaoa = oa.dot(oa);
    let a = baba - bard * bard;
    let b = baba * rdoa - baoa * bard;
    let c = baba * oaoa - baoa * baoa - r * r * baba;
    let h = b * b - a * c;
    if h >= 0.0 && a > 0.0 {
        let t = (-b - float::sqrt(h)) / a;
        let y = baoa + t * bard;
        if y > 0.0 && y < baba && t > 0.0 {
            return Some(t);
        }
    }
    // end caps
    let mut best: Option<f64> = None;
    for center in [pa, pb] {
        let oc = ro - center;
        let b = rd.dot(oc);
        let c = oc.dot(oc) - r * r;
        let h = b * b - c;
        if h >= 0.0 {
            let t = -b - float::sqrt(h);
            if t > 0.0 && best.is_none_or(|v| t < v) {
                best = Some(t);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_is_valid() {
        let f = TwoBoneFixture::default();
        let t = f.template();
        t.validate().unwrap();
        for (v, &l) in t.vertices.iter().zip(&t.labels) {
            let end = f.axis_end(l as usize);
            let axial = (v.y / end.y).clamp(0.0, 1.0) * end.y;
            let d = (*v - Vec3::new(0.0, axial, 0.0)).norm();
            assert!((d - f.radius).abs() < 1e-12);
        }
    }

    #[test]
    fn capsule_hits() {
        let pa = Vec3::new(0.0, -1.0, 0.0);
        let pb = Vec3::new(0.0, 1.0, 0.0);
        let ro = Vec3::new(0.0, 0.0, -5.0);
        let rd = Vec3::new(0.0, 0.0, 1.0);
        assert!((capsule_hit(ro, rd, pa, pb, 0.5).unwrap() - 4.5).abs() < 1e-12);
        // through the top cap
        let ro = Vec3::new(0.0, 1.3, -5.0);
        let t = capsule_hit(ro, rd, pa, pb, 0.5).unwrap();
        assert!((t - (5.0 - (0.25f64 - 0.09).sqrt())).abs() < 1e-12);
        assert!(capsule_hit(Vec3::new(2.0, 0.0, -5.0), rd, pa, pb, 0.5).is_none());
        assert!(capsule_hit(Vec3::new(0.0, 0.0, 5.0), rd, pa, pb, 0.5).is_none());
    }
}
