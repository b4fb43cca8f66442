use super::linalg::{Mat2x3, Mat3, Vec2, Vec3};
use crate::error::{invalid, Error, Result};

/// Default near-plane depth in meters.
pub const DEFAULT_NEAR: f64 = 0.01;

/// Pinhole camera with a world-to-camera pose `x_cam = R·x + t`.
///
/// The camera looks down `+z`. Pixel `(i, j)` is sampled at image coordinate
/// `(i, j)`, so the principal point is given in the same units as pixel indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
    pub width: u32,
    pub height: u32,
    pub near: f64,
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Mat3,
        translation: Vec3,
        width: u32,
        height: u32,
        near: f64,
    ) -> Result<Self> {
        let cam = Self { fx, fy, cx, cy, rotation, translation, width, height, near };
        cam.validate()?;
        Ok(cam)
    }

    /// Builds a camera from a full intrinsic matrix. Skew must be zero and the
    /// last row must be `[0, 0, 1]`.
    pub fn from_intrinsics(
        k: &Mat3,
        rotation: Mat3,
        translation: Vec3,
        width: u32,
        height: u32,
        near: f64,
    ) -> Result<Self> {
        let m = &k.0;
        if m[0][1] != 0.0 || m[1][0] != 0.0 || m[2] != [0.0, 0.0, 1.0] {
            return Err(invalid("intrinsics must be [[fx,0,cx],[0,fy,cy],[0,0,1]]"));
        }
        Self::new(m[0][0], m[1][1], m[0][2], m[1][2], rotation, translation, width, height, near)
    }

    pub fn intrinsics(&self) -> Mat3 {
        Mat3([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(invalid("focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(invalid("image size must be at least 1x1"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(invalid("principal point must lie inside the image"));
        }
        if !(self.near > 0.0) {
            return Err(invalid("near plane must be positive"));
        }
        if !self.rotation.is_rotation(1e-6) {
            return Err(invalid("camera rotation is not a proper rotation"));
        }
        if !self.translation.is_finite() {
            return Err(invalid("camera translation is not finite"));
        }
        Ok(())
    }

    pub fn world_to_camera(&self, x_world: Vec3) -> Vec3 {
        self.rotation.mul_vec(x_world) + self.translation
    }

    pub fn camera_to_world(&self, x_cam: Vec3) -> Vec3 {
        self.rotation.transpose().mul_vec(x_cam - self.translation)
    }

    /// Camera-frame point to pixel coordinates (no depth check).
    pub fn pixel_of(&self, x_cam: Vec3) -> Vec2 {
        let iz = 1.0 / x_cam.z;
        Vec2::new(self.fx * x_cam.x * iz + self.cx, self.fy * x_cam.y * iz + self.cy)
    }

    /// Projects a world point, returning the pixel and the camera-frame depth.
    pub fn project_point(&self, x_world: Vec3) -> Result<(Vec2, f64)> {
        let xc = self.world_to_camera(x_world);
        if xc.z <= 0.0 {
            return Err(Error::BehindCamera { depth: xc.z });
        }
        Ok((self.pixel_of(xc), xc.z))
    }

    /// Inverse of [`Camera::project_point`]: the world point on the pixel's ray at `depth`.
    pub fn unproject(&self, pixel: Vec2, depth: f64) -> Vec3 {
        let xc = Vec3::new((pixel.x - self.cx) / self.fx * depth, (pixel.y - self.cy) / self.fy * depth, depth);
        self.camera_to_world(xc)
    }

    /// Jacobian of the perspective projection at a camera-frame point.
    pub fn projection_jacobian(&self, x_cam: Vec3) -> Result<Mat2x3> {
        if x_cam.z < self.near {
            return Err(Error::Culled { depth: x_cam.z, near: self.near });
        }
        Ok(self.jacobian_unchecked(x_cam))
    }

    #[inline]
    pub(crate) fn jacobian_unchecked(&self, x_cam: Vec3) -> Mat2x3 {
        let iz = 1.0 / x_cam.z;
        let iz2 = iz * iz;
        Mat2x3([
            [self.fx * iz, 0.0, -self.fx * x_cam.x * iz2],
            [0.0, self.fy * iz, -self.fy * x_cam.y * iz2],
        ])
    }

    /// Simple look-at constructor: camera at `eye` looking at `target`, image
    /// `y` axis aligned with `-up` projected onto the image plane.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, focal: f64, width: u32, height: u32) -> Result<Self> {
        let forward = (target - eye).normalized();
        let right = forward.cross(up);
        if right.norm() < 1e-12 {
            return Err(invalid("look_at: up is parallel to the viewing direction"));
        }
        let right = right.normalized();
        let down = forward.cross(right);
        let rotation = Mat3([right.to_array(), down.to_array(), forward.to_array()]);
        let translation = -rotation.mul_vec(eye);
        Self::new(
            focal,
            focal,
            0.5 * (width as f64 - 1.0),
            0.5 * (height as f64 - 1.0),
            rotation,
            translation,
            width,
            height,
            DEFAULT_NEAR,
        )
    }
}
