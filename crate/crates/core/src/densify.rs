//! Skeleton to point cloud: a cylinder around every limb, a sphere for the
//! face and a box for the torso.
//!
//! Sampling happens in a frame derived from the skeleton itself (see
//! [`body_frame`]), so moving the skeleton rigidly moves the cloud with it.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::float;
use crate::geometry::{Mat3, Skeleton, Vec3};
use crate::par;
use crate::rng::SampleStream;

const FACE_STREAM: u64 = u64::MAX - 1;
const TORSO_STREAM: u64 = u64::MAX - 2;

/// Which primitive produced a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Limb(u32),
    Face,
    Torso,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub regions: Vec<Region>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn extend(&mut self, other: PointCloud) {
        self.points.extend(other.points);
        self.regions.extend(other.regions);
    }

    fn tagged(points: Vec<Vec3>, region: Region) -> Self {
        let regions = alloc::vec![region; points.len()];
        Self { points, regions }
    }

    /// Number of points per region: `(limb points, face points, torso points)`.
    pub fn region_counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for r in &self.regions {
            match r {
                Region::Limb(_) => c.0 += 1,
                Region::Face => c.1 += 1,
                Region::Torso => c.2 += 1,
            }
        }
        c
    }

    /// Mean distance from each point to its nearest neighbour (brute force).
    pub fn mean_nearest_neighbor_distance(&self) -> Option<f64> {
        let n = self.points.len();
        if n < 2 {
            return None;
        }
        let pts = &self.points;
        let per_point = par::map_range(n, |i| {
            let mut best = f64::INFINITY;
            for (j, q) in pts.iter().enumerate() {
                if j != i {
                    best = best.min((pts[i] - *q).norm_squared());
                }
            }
            float::sqrt(best)
        });
        Some(per_point.iter().sum::<f64>() / n as f64)
    }
}

/// How the face sphere's radius is derived from the facial joints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FaceRadiusMode {
    /// Half of the largest pairwise joint distance.
    #[default]
    HalfMaxPairwise,
    /// The largest pairwise joint distance itself.
    MaxPairwise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensifyConfig {
    pub points_per_limb: usize,
    pub points_per_region: usize,
    /// Cylinder radius as a fraction of limb length.
    pub radius_factor: f64,
    pub face_radius_mode: FaceRadiusMode,
    /// Relative growth of each torso box extent.
    pub torso_inflation: f64,
    /// Lower bound on every torso box extent, as a fraction of its largest extent.
    pub torso_min_thickness: f64,
    /// Skip limbs whose endpoints both lie in the face or both in the torso set.
    pub exclude_region_limbs: bool,
    pub seed: u64,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            points_per_limb: 200,
            points_per_region: 500,
            radius_factor: 0.1,
            face_radius_mode: FaceRadiusMode::HalfMaxPairwise,
            torso_inflation: 0.05,
            torso_min_thickness: 0.25,
            exclude_region_limbs: true,
            seed: 0,
        }
    }
}

impl DensifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points_per_limb == 0 || self.points_per_region == 0 {
            return Err(Error::Config("point counts must be at least 1".into()));
        }
        if !(self.radius_factor > 0.0) {
            return Err(Error::Config("radius_factor must be positive".into()));
        }
        if !(self.torso_inflation >= 0.0) || !(0.0..=1.0).contains(&self.torso_min_thickness) {
            return Err(Error::Config("torso box settings out of range".into()));
        }
        Ok(())
    }
}

fn check_count(count: usize) -> Result<()> {
    if count == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    Ok(())
}

/// Unit vector perpendicular to `axis`, built from the first frame column
/// with `|cos| < 0.7` to it. Some column always qualifies (the smallest
/// component of a unit vector is at most `1/√3`), and limbs aligned with the
/// frame, where cosines are 0 or 1, sit far from the threshold, so rounding
/// never flips the choice.
fn perpendicular(axis: Vec3, frame: &Mat3) -> Vec3 {
    let e = (0..3).map(|k| frame.col(k)).find(|c| axis.dot(*c).abs() < 0.7).unwrap_or(frame.col(2));
    (e - axis * axis.dot(e)).normalized()
}

fn sample_cylinder(a: Vec3, b: Vec3, radius: f64, count: usize, rng: &mut SampleStream, frame: &Mat3) -> Vec<Vec3> {
    let axis = b - a;
    let dir = axis.normalized();
    let u = perpendicular(dir, frame);
    let v = dir.cross(u);
    (0..count)
        .map(|_| {
            let t = rng.uniform();
            let theta = rng.uniform() * core::f64::consts::TAU;
            a + axis * t + (u * float::cos(theta) + v * float::sin(theta)) * radius
        })
        .collect()
}

fn sample_sphere(center: Vec3, radius: f64, count: usize, rng: &mut SampleStream, frame: &Mat3) -> Vec<Vec3> {
    (0..count)
        .map(|_| {
            let z = 1.0 - 2.0 * rng.uniform();
            let phi = rng.uniform() * core::f64::consts::TAU;
            let rho = float::sqrt((1.0 - z * z).max(0.0));
            let dir = Vec3::new(rho * float::cos(phi), rho * float::sin(phi), z);
            center + frame.mul_vec(dir) * radius
        })
        .collect()
}

/// Samples the surface of the local box `[lo, hi]`, choosing faces by area.
fn sample_box_local(lo: Vec3, hi: Vec3, count: usize, rng: &mut SampleStream) -> Vec<Vec3> {
    let e = hi - lo;
    // Face pairs normal to x, y, z.
    let areas = [e.y * e.z, e.x * e.z, e.x * e.y];
    let total = 2.0 * (areas[0] + areas[1] + areas[2]);
    (0..count)
        .map(|_| {
            let mut pick = rng.uniform() * total;
            let mut face = 5;
            for f in 0..6 {
                let a = areas[f / 2];
                if pick < a {
                    face = f;
                    break;
                }
                pick -= a;
            }
            let axis = face / 2;
            let (s, t) = (rng.uniform(), rng.uniform());
            let mut p = Vec3::ZERO;
            let (i, j) = match axis {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            p[axis] = if face % 2 == 0 { lo[axis] } else { hi[axis] };
            p[i] = lo[i] + s * e[i];
            p[j] = lo[j] + t * e[j];
            p
        })
        .collect()
}

/// `count` points uniform on the lateral surface of the cylinder around `a → b`.
pub fn build_cylinder(limb: (Vec3, Vec3), radius: f64, count: usize, seed: u64) -> Result<PointCloud> {
    let (a, b) = limb;
    if (b - a).norm() == 0.0 {
        return Err(Error::DegenerateLimb { limb: 0 });
    }
    if !(radius > 0.0) {
        return Err(invalid("cylinder radius must be positive"));
    }
    check_count(count)?;
    let mut rng = SampleStream::new(seed, 0);
    Ok(PointCloud::tagged(sample_cylinder(a, b, radius, count, &mut rng, &Mat3::IDENTITY), Region::Limb(0)))
}

/// `count` points uniform on a sphere surface.
pub fn build_sphere(center: Vec3, radius: f64, count: usize, seed: u64) -> Result<PointCloud> {
    if !(radius > 0.0) {
        return Err(invalid("sphere radius must be positive"));
    }
    check_count(count)?;
    let mut rng = SampleStream::new(seed, 0);
    Ok(PointCloud::tagged(sample_sphere(center, radius, count, &mut rng, &Mat3::IDENTITY), Region::Face))
}

/// `count` points on the surface of an axis-aligned box, faces weighted by area.
pub fn build_cuboid(corner_min: Vec3, corner_max: Vec3, count: usize, seed: u64) -> Result<PointCloud> {
    let e = corner_max - corner_min;
    if !(e.x > 0.0 && e.y > 0.0 && e.z > 0.0) {
        return Err(invalid("box must have positive extent along every axis"));
    }
    check_count(count)?;
    let mut rng = SampleStream::new(seed, 0);
    Ok(PointCloud::tagged(sample_box_local(corner_min, corner_max, count, &mut rng), Region::Torso))
}

/// Orthonormal frame attached to the skeleton.
///
/// Built by Gram-Schmidt on offsets from the first reference joint, where the
/// reference joints are the torso joints when at least three exist and all
/// joints otherwise. Depends only on relative joint positions and their order,
/// so it rotates with the skeleton. Collinear skeletons fall back to a
/// world-aligned completion of the single available direction.
pub fn body_frame(sk: &Skeleton) -> Mat3 {
    let all: Vec<usize> = (0..sk.joints.len()).collect();
    let primary: &[usize] = if sk.torso_indices.len() >= 3 { &sk.torso_indices } else { &all };
    frame_from(sk, primary).or_else(|| frame_from(sk, &all)).unwrap_or(Mat3::IDENTITY)
}

fn frame_from(sk: &Skeleton, idx: &[usize]) -> Option<Mat3> {
    let origin = sk.position(*idx.first()?);
    let offsets: Vec<Vec3> = idx[1..].iter().map(|&i| sk.position(i) - origin).collect();
    let scale = offsets.iter().map(|o| o.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    let tol = 1e-6 * scale;
    let e1 = offsets.iter().find(|o| o.norm() > tol)?.normalized();
    let e2 = offsets
        .iter()
        .map(|o| *o - e1 * e1.dot(*o))
        .find(|r| r.norm() > tol)
        .map(|r| r.normalized())
        .unwrap_or_else(|| perpendicular(e1, &Mat3::IDENTITY));
    Some(Mat3::from_cols(e1, e2, e1.cross(e2)))
}

fn in_set(set: &[usize], i: usize) -> bool {
    set.contains(&i)
}

/// Limbs that receive a cylinder under `cfg`.
pub fn cylinder_limbs(sk: &Skeleton, cfg: &DensifyConfig) -> Vec<usize> {
    (0..sk.limbs.len())
        .filter(|&n| {
            let (a, b) = sk.limbs[n];
            let inside = (in_set(&sk.face_indices, a) && in_set(&sk.face_indices, b))
                || (in_set(&sk.torso_indices, a) && in_set(&sk.torso_indices, b));
            !(cfg.exclude_region_limbs && inside)
        })
        .collect()
}

/// Builds the initial point cloud from a skeleton.
///
/// Order: limb cylinders in limb order, then the face sphere, then the torso
/// box. Limb `n` samples from stream `n` of the seed, so the result does not
/// depend on evaluation order.
pub fn densify_pcd(sk: &Skeleton, cfg: &DensifyConfig) -> Result<PointCloud> {
    cfg.validate()?;
    sk.validate()?;
    if sk.limbs.is_empty() {
        return Err(invalid("skeleton has no limbs"));
    }
    let frame = body_frame(sk);
    let limbs = cylinder_limbs(sk, cfg);
    for &n in &limbs {
        let (a, b) = sk.limbs[n];
        if sk.position(a) == sk.position(b) {
            return Err(Error::DegenerateLimb { limb: n });
        }
    }

    let parts = par::map_range(limbs.len(), |k| {
        let n = limbs[k];
        let (a, b) = sk.limbs[n];
        let (pa, pb) = (sk.position(a), sk.position(b));
        let radius = cfg.radius_factor * (pa - pb).norm();
        let mut rng = SampleStream::new(cfg.seed, n as u64);
        PointCloud::tagged(sample_cylinder(pa, pb, radius, cfg.points_per_limb, &mut rng, &frame), Region::Limb(n as u32))
    });
    let mut cloud = PointCloud::default();
    for p in parts {
        cloud.extend(p);
    }

    if !sk.face_indices.is_empty() {
        let pts: Vec<Vec3> = sk.face_indices.iter().map(|&i| sk.position(i)).collect();
        let center = pts.iter().fold(Vec3::ZERO, |s, p| s + *p) * (1.0 / pts.len() as f64);
        let mut max_d = 0.0f64;
        for (i, p) in pts.iter().enumerate() {
            for q in &pts[i + 1..] {
                max_d = max_d.max((*p - *q).norm());
            }
        }
        let radius = match cfg.face_radius_mode {
            FaceRadiusMode::HalfMaxPairwise => 0.5 * max_d,
            FaceRadiusMode::MaxPairwise => max_d,
        };
        if !(radius > 0.0) {
            return Err(invalid("face region needs at least two distinct joints"));
        }
        let mut rng = SampleStream::new(cfg.seed, FACE_STREAM);
        cloud.extend(PointCloud::tagged(
            sample_sphere(center, radius, cfg.points_per_region, &mut rng, &frame),
            Region::Face,
        ));
    }

    if !sk.torso_indices.is_empty() {
        let origin = sk.position(sk.torso_indices[0]);
        let rt = frame.transpose();
        let local: Vec<Vec3> = sk.torso_indices.iter().map(|&i| rt.mul_vec(sk.position(i) - origin)).collect();
        let (mut lo, mut hi) = (local[0], local[0]);
        for p in &local[1..] {
            lo = lo.min(*p);
            hi = hi.max(*p);
        }
        let center = (lo + hi) * 0.5;
        let mut ext = (hi - lo) * (1.0 + cfg.torso_inflation);
        let floor = cfg.torso_min_thickness * ext.max_abs();
        for k in 0..3 {
            ext[k] = ext[k].max(floor);
        }
        if !(ext.x > 0.0 && ext.y > 0.0 && ext.z > 0.0) {
            return Err(invalid("torso region needs at least two distinct joints"));
        }
        let mut rng = SampleStream::new(cfg.seed, TORSO_STREAM);
        let pts = sample_box_local(center - ext * 0.5, center + ext * 0.5, cfg.points_per_region, &mut rng)
            .into_iter()
            .map(|l| origin + frame.mul_vec(l))
            .collect();
        cloud.extend(PointCloud::tagged(pts, Region::Torso));
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Joint;
    use alloc::vec;

    fn axis_distance(p: Vec3, a: Vec3, b: Vec3) -> (f64, f64) {
        let d = (b - a).normalized();
        let rel = p - a;
        let t = rel.dot(d);
        ((rel - d * t).norm(), t / (b - a).norm())
    }

    #[test]
    fn cylinder_points_lie_on_surface() {
        let (a, b) = (Vec3::ZERO, Vec3::new(0.0, 0.0, 1.0));
        let pc = build_cylinder((a, b), 0.1, 200, 3).unwrap();
        assert_eq!(pc.len(), 200);
        for p in &pc.points {
            let (r, t) = axis_distance(*p, a, b);
            assert!((r - 0.1).abs() < 1e-9);
            assert!((0.0..=1.0).contains(&t));
        }
        let one = build_cylinder((a, b), 0.1, 1, 3).unwrap();
        assert!((axis_distance(one.points[0], a, b).0 - 0.1).abs() < 1e-9);
    }

    #[test]
    fn cylinder_axial_coordinate_is_uniform() {
        let (a, b) = (Vec3::new(1.0, -2.0, 0.5), Vec3::new(-0.5, 1.0, 2.0));
        let pc = build_cylinder((a, b), 0.3, 20000, 11).unwrap();
        let mut bins = [0usize; 10];
        for p in &pc.points {
            let t = axis_distance(*p, a, b).1;
            bins[((t * 10.0) as usize).min(9)] += 1;
        }
        for c in bins {
            assert!((c as f64 / 2000.0 - 1.0).abs() < 0.05, "bin count {c}");
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let p = Vec3::new(1.0, 1.0, 1.0);
        assert!(matches!(build_cylinder((p, p), 0.1, 10, 0), Err(Error::DegenerateLimb { .. })));
        assert!(build_cylinder((p, Vec3::ZERO), 0.1, 0, 0).is_err());
        assert!(build_sphere(p, 0.0, 10, 0).is_err());
        assert!(build_cuboid(Vec3::ZERO, Vec3::new(1.0, 0.0, 1.0), 10, 0).is_err());
    }

    #[test]
    fn sphere_points_on_surface_and_centered() {
        let pc = build_sphere(Vec3::ZERO, 1.0, 500, 5).unwrap();
        assert_eq!(pc.len(), 500);
        assert!(pc.points.iter().all(|p| (p.norm() - 1.0).abs() < 1e-9));
        let big = build_sphere(Vec3::ZERO, 1.0, 50000, 5).unwrap();
        let mean = big.points.iter().fold(Vec3::ZERO, |s, p| s + *p) * (1.0 / 50000.0);
        assert!(mean.max_abs() < 0.02, "{mean:?}");
        assert_eq!(build_sphere(Vec3::ZERO, 2.0, 1, 5).unwrap().len(), 1);
    }

    fn on_box_face(p: Vec3, lo: Vec3, hi: Vec3) -> bool {
        let inside = (0..3).all(|k| p[k] >= lo[k] - 1e-12 && p[k] <= hi[k] + 1e-12);
        let on_plane = (0..3).any(|k| (p[k] - lo[k]).abs() < 1e-9 || (p[k] - hi[k]).abs() < 1e-9);
        inside && on_plane
    }

    #[test]
    fn cuboid_points_on_faces_and_area_weighted() {
        let (lo, hi) = (Vec3::ZERO, Vec3::splat(1.0));
        let pc = build_cuboid(lo, hi, 500, 1).unwrap();
        assert!(pc.points.iter().all(|p| on_box_face(*p, lo, hi)));

        let hi = Vec3::new(10.0, 1.0, 1.0);
        let n = 60000;
        let pc = build_cuboid(lo, hi, n, 2).unwrap();
        let y_faces = pc.points.iter().filter(|p| p.y == 0.0 || p.y == 1.0).count() as f64 / n as f64;
        let z_faces = pc.points.iter().filter(|p| p.z == 0.0 || p.z == 1.0).count() as f64 / n as f64;
        // Each long face pair carries 20 of the 42 units of area.
        assert!((y_faces - 10.0 / 21.0).abs() < 0.01, "{y_faces}");
        assert!((z_faces - 10.0 / 21.0).abs() < 0.01, "{z_faces}");

        let a = build_cuboid(lo, hi, 6, 9).unwrap();
        let b = build_cuboid(lo, hi, 6, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_limb_skeleton() {
        let sk = Skeleton::new(
            vec![Joint::new("a", Vec3::ZERO), Joint::new("b", Vec3::new(0.0, 1.0, 0.0))],
            vec![(0, 1)],
            vec![],
            vec![],
        )
        .unwrap();
        let pc = densify_pcd(&sk, &DensifyConfig::default()).unwrap();
        assert_eq!(pc.len(), 200);
        for p in &pc.points {
            assert!((axis_distance(*p, Vec3::ZERO, Vec3::new(0.0, 1.0, 0.0)).0 - 0.1).abs() < 1e-9);
        }
    }

    #[test]
    fn skeleton_without_limbs_is_rejected() {
        let sk = Skeleton::new(vec![Joint::new("a", Vec3::ZERO)], vec![], vec![], vec![]).unwrap();
        assert!(densify_pcd(&sk, &DensifyConfig::default()).is_err());
    }

    #[test]
    fn coincident_limb_endpoints_are_reported() {
        let sk = Skeleton::new(
            vec![Joint::new("a", Vec3::ZERO), Joint::new("b", Vec3::ZERO), Joint::new("c", Vec3::splat(1.0))],
            vec![(0, 2), (0, 1)],
            vec![],
            vec![],
        )
        .unwrap();
        assert_eq!(densify_pcd(&sk, &DensifyConfig::default()), Err(Error::DegenerateLimb { limb: 1 }));
    }
}
