use alloc::string::String;
use alloc::vec::Vec;

use super::linalg::Vec3;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub position: Vec3,
}

impl Joint {
    pub fn new(name: impl Into<String>, position: Vec3) -> Self {
        Self { name: name.into(), position }
    }
}

/// Named 3D joints plus the limb connection list.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub joints: Vec<Joint>,
    pub limbs: Vec<(usize, usize)>,
    pub face_indices: Vec<usize>,
    pub torso_indices: Vec<usize>,
}

impl Skeleton {
    pub fn new(
        joints: Vec<Joint>,
        limbs: Vec<(usize, usize)>,
        face_indices: Vec<usize>,
        torso_indices: Vec<usize>,
    ) -> Result<Self> {
        let sk = Self { joints, limbs, face_indices, torso_indices };
        sk.validate()?;
        Ok(sk)
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.joints.len();
        if !self.limbs.is_empty() && j < 2 {
            return Err(invalid("a skeleton with limbs needs at least two joints"));
        }
        for (n, &(a, b)) in self.limbs.iter().enumerate() {
            if a >= j || b >= j {
                return Err(invalid(alloc::format!("limb {n} references joint out of range ({a}, {b})")));
            }
            if a == b {
                return Err(invalid(alloc::format!("limb {n} is a self-loop on joint {a}")));
            }
        }
        for (what, list) in [("face_indices", &self.face_indices), ("torso_indices", &self.torso_indices)] {
            if let Some(&bad) = list.iter().find(|&&i| i >= j) {
                return Err(invalid(alloc::format!("{what} contains out-of-range joint {bad}")));
            }
        }
        for joint in &self.joints {
            if !joint.position.is_finite() {
                return Err(invalid(alloc::format!("joint `{}` has a non-finite position", joint.name)));
            }
        }
        Ok(())
    }

    pub fn position(&self, i: usize) -> Vec3 {
        self.joints[i].position
    }

    /// Applies `f` to every joint position.
    pub fn map_positions(&self, f: impl Fn(Vec3) -> Vec3) -> Skeleton {
        let mut out = self.clone();
        for j in &mut out.joints {
            j.position = f(j.position);
        }
        out
    }
}
