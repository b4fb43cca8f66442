use alloc::vec::Vec;

use super::linalg::{Mat3, Vec3};
use super::skeleton::Skeleton;
use crate::error::{invalid, Result};
use crate::float;

/// Quaternion `(w, x, y, z)`, not necessarily normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat::new(1.0, 0.0, 0.0, 0.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Rotation of `angle` radians about the unit `axis`.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let a = axis.normalized();
        let (s, c) = (float::sin(0.5 * angle), float::cos(0.5 * angle));
        Self::new(c, a.x * s, a.y * s, a.z * s)
    }

    pub fn norm(self) -> f64 {
        float::sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
    }

    pub fn normalized(self) -> Result<Quat> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(invalid("quaternion has zero or non-finite norm"));
        }
        Ok(self.scale(1.0 / n))
    }

    pub fn scale(self, s: f64) -> Quat {
        Quat::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn add(self, o: Quat) -> Quat {
        Quat::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }

    /// Hamilton product `self * o`.
    pub fn mul(self, o: Quat) -> Quat {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    /// Rotation matrix of an already-normalized quaternion.
    pub fn to_rotmat_unit(self) -> Mat3 {
        let Quat { w, x, y, z } = self;
        Mat3([
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ])
    }
}

/// Rotation matrix of `q / |q|`.
pub fn quat_to_rotmat(q: Quat) -> Result<Mat3> {
    Ok(q.normalized()?.to_rotmat_unit())
}

/// First two columns of a joint's local rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointRotation6D(pub [f64; 6]);

impl JointRotation6D {
    pub fn from_rotation(r: &Mat3) -> Self {
        let (c0, c1) = (r.col(0), r.col(1));
        Self([c0.x, c0.y, c0.z, c1.x, c1.y, c1.z])
    }

    pub fn identity() -> Self {
        Self::from_rotation(&Mat3::IDENTITY)
    }
}

/// Rebuilds a rotation from its 6D encoding by Gram-Schmidt.
pub fn rotation_from_6d(w: &JointRotation6D) -> Result<Mat3> {
    let a1 = Vec3::new(w.0[0], w.0[1], w.0[2]);
    let a2 = Vec3::new(w.0[3], w.0[4], w.0[5]);
    let n1 = a1.norm();
    if n1 == 0.0 || !n1.is_finite() {
        return Err(invalid("6D rotation has a zero first column"));
    }
    let b1 = a1 * (1.0 / n1);
    let r2 = a2 - b1 * b1.dot(a2);
    let n2 = r2.norm();
    if n2 <= 1e-12 * n1.max(a2.norm()) {
        return Err(invalid("6D rotation columns are parallel"));
    }
    let b2 = r2 * (1.0 / n2);
    Ok(Mat3::from_cols(b1, b2, b1.cross(b2)))
}

/// Builds the pose feature: one 6D rotation per joint.
pub fn joint_rotations_6d(sk: &Skeleton, local_rotations: &[Mat3]) -> Result<Vec<JointRotation6D>> {
    if local_rotations.len() != sk.joints.len() {
        return Err(invalid(alloc::format!(
            "expected {} joint rotations, got {}",
            sk.joints.len(),
            local_rotations.len()
        )));
    }
    Ok(local_rotations.iter().map(JointRotation6D::from_rotation).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_mat_close(a: &Mat3, b: &Mat3, tol: f64) {
        assert!(a.max_abs_diff(b) <= tol, "{a:?} vs {b:?}");
    }

    #[test]
    fn identity_quaternion_gives_identity() {
        assert_eq!(quat_to_rotmat(Quat::IDENTITY).unwrap(), Mat3::IDENTITY);
    }

    #[test]
    fn half_turn_about_z() {
        let r = quat_to_rotmat(Quat::new(0.0, 0.0, 0.0, 1.0)).unwrap();
        assert_mat_close(&r, &Mat3([[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]]), 0.0);
    }

    #[test]
    fn general_quaternion_matches_reference() {
        // scipy.spatial.transform.Rotation on (0.7,0.1,0.2,0.3)/|q|.
        let expected = Mat3([
            [0.5873015873015872, -0.6031746031746033, 0.5396825396825398],
            [0.7301587301587302, 0.6825396825396826, -0.0317460317460317],
            [-0.3492063492063492, 0.4126984126984127, 0.8412698412698413],
        ]);
        let r = quat_to_rotmat(Quat::new(0.7, 0.1, 0.2, 0.3)).unwrap();
        assert_mat_close(&r, &expected, 1e-12);
        assert!(r.is_rotation(1e-12));
    }

    #[test]
    fn zero_quaternion_is_rejected() {
        assert!(quat_to_rotmat(Quat::new(0.0, 0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn six_d_examples() {
        let sk = Skeleton::new(alloc::vec![], alloc::vec![], alloc::vec![], alloc::vec![]).unwrap();
        assert!(joint_rotations_6d(&sk, &[]).unwrap().is_empty());
        assert_eq!(JointRotation6D::identity().0, [1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let rz = quat_to_rotmat(Quat::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), core::f64::consts::FRAC_PI_2)).unwrap();
        let w = JointRotation6D::from_rotation(&rz);
        let expected = [0.0, 1.0, 0.0, -1.0, 0.0, 0.0];
        for (a, b) in w.0.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn six_d_length_mismatch() {
        let sk = Skeleton::new(
            alloc::vec![super::super::Joint::new("a", Vec3::ZERO)],
            alloc::vec![],
            alloc::vec![],
            alloc::vec![],
        )
        .unwrap();
        assert!(joint_rotations_6d(&sk, &[]).is_err());
    }
}
