//! Shared geometry: small fixed-size linear algebra, rotations, the pinhole
//! camera, and the skeleton data model.

mod camera;
mod linalg;
mod rotation;
mod skeleton;

pub use camera::{Camera, DEFAULT_NEAR};
pub use linalg::{Mat2, Mat2x3, Mat3, Mat4, Vec2, Vec3};
pub use rotation::{joint_rotations_6d, quat_to_rotmat, rotation_from_6d, JointRotation6D, Quat};
pub use skeleton::{Joint, Skeleton};
