//! Structured-text documents (TOML): skeletons, cameras, templates, bone
//! transforms and target manifests. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use skelsplat_core::geometry::{Camera, Joint, Mat3, Mat4, Skeleton, Vec3, DEFAULT_NEAR};
use skelsplat_core::skinning::{BoneTransforms, CanonicalTemplate};

use crate::error::{toml_error, IoError, Result};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| IoError::io(path, e))
}

/// Parses `text` as `T`, reporting the line of the first offending key.
pub(crate) fn parse_toml<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let (line, message) = toml_error(text, &e);
        IoError::Parse { path: path.to_path_buf(), line, message }
    })
}

pub(crate) fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_toml(path, &read_text(path)?)
}

fn semantic(path: &Path, e: skelsplat_core::Error) -> IoError {
    IoError::format(path, e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointDoc {
    pub name: String,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonDoc {
    pub joints: Vec<JointDoc>,
    pub limbs: Vec<[usize; 2]>,
    #[serde(default)]
    pub face: Vec<usize>,
    #[serde(default)]
    pub torso: Vec<usize>,
}

impl SkeletonDoc {
    pub fn from_skeleton(sk: &Skeleton) -> Self {
        Self {
            joints: sk.joints.iter().map(|j| JointDoc { name: j.name.clone(), position: j.position.to_array() }).collect(),
            limbs: sk.limbs.iter().map(|&(a, b)| [a, b]).collect(),
            face: sk.face_indices.clone(),
            torso: sk.torso_indices.clone(),
        }
    }

    pub fn to_skeleton(&self) -> skelsplat_core::Result<Skeleton> {
        Skeleton::new(
            self.joints.iter().map(|j| Joint::new(j.name.clone(), Vec3::from_array(j.position))).collect(),
            self.limbs.iter().map(|l| (l[0], l[1])).collect(),
            self.face.clone(),
            self.torso.clone(),
        )
    }
}

pub fn load_skeleton(path: &Path) -> Result<Skeleton> {
    let doc: SkeletonDoc = load_toml(path)?;
    doc.to_skeleton().map_err(|e| semantic(path, e))
}

pub fn save_skeleton(path: &Path, sk: &Skeleton) -> Result<()> {
    write_text(path, &toml::to_string(&SkeletonDoc::from_skeleton(sk)).expect("skeletons serialize"))
}

fn default_near() -> f64 {
    DEFAULT_NEAR
}

/// Pinhole camera: `x_cam = rotation · x_world + translation`, pixels at
/// `(fx·x/z + cx, fy·y/z + cy)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraDoc {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default = "default_near")]
    pub near: f64,
    /// Row-major world-to-camera rotation.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl CameraDoc {
    pub fn from_camera(c: &Camera) -> Self {
        Self {
            width: c.width,
            height: c.height,
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            near: c.near,
            rotation: c.rotation.0,
            translation: c.translation.to_array(),
        }
    }

    pub fn to_camera(&self) -> skelsplat_core::Result<Camera> {
        Camera::new(
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            Mat3(self.rotation),
            Vec3::from_array(self.translation),
            self.width,
            self.height,
            self.near,
        )
    }
}

pub fn load_camera(path: &Path) -> Result<Camera> {
    let doc: CameraDoc = load_toml(path)?;
    doc.to_camera().map_err(|e| semantic(path, e))
}

pub fn save_camera(path: &Path, cam: &Camera) -> Result<()> {
    write_text(path, &toml::to_string(&CameraDoc::from_camera(cam)).expect("cameras serialize"))
}

/// Canonical template. `bone_parents` uses `-1` for roots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateDoc {
    pub bone_parents: Vec<i64>,
    pub labels: Vec<u32>,
    pub vertices: Vec<[f64; 3]>,
    pub weights: Vec<Vec<f64>>,
}

impl TemplateDoc {
    pub fn from_template(t: &CanonicalTemplate) -> Self {
        Self {
            bone_parents: t.bone_parents.iter().map(|p| p.map_or(-1, |v| v as i64)).collect(),
            labels: t.labels.clone(),
            vertices: t.vertices.iter().map(|v| v.to_array()).collect(),
            weights: (0..t.len()).map(|k| t.weight_row(k).to_vec()).collect(),
        }
    }

    pub fn to_template(&self, num_classes: usize) -> skelsplat_core::Result<CanonicalTemplate> {
        let b = self.bone_parents.len();
        let mut parents = Vec::with_capacity(b);
        for (i, &p) in self.bone_parents.iter().enumerate() {
            parents.push(match p {
                -1 => None,
                p if p >= 0 => Some(p as usize),
                _ => {
                    return Err(skelsplat_core::Error::InvalidInput(format!("bone_parents[{i}] must be -1 or an index")))
                }
            });
        }
        if let Some(k) = self.weights.iter().position(|row| row.len() != b) {
            return Err(skelsplat_core::Error::InvalidInput(format!("weights[{k}] must have {b} entries")));
        }
        let t = CanonicalTemplate {
            vertices: self.vertices.iter().map(|&v| Vec3::from_array(v)).collect(),
            weights: self.weights.iter().flatten().copied().collect(),
            labels: self.labels.clone(),
            bone_parents: parents,
            num_classes,
        };
        t.validate()?;
        Ok(t)
    }
}

pub fn load_template(path: &Path, num_classes: usize) -> Result<CanonicalTemplate> {
    let doc: TemplateDoc = load_toml(path)?;
    doc.to_template(num_classes).map_err(|e| semantic(path, e))
}

pub fn save_template(path: &Path, t: &CanonicalTemplate) -> Result<()> {
    write_text(path, &toml::to_string(&TemplateDoc::from_template(t)).expect("templates serialize"))
}

/// One row-major 4×4 rigid transform per bone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BonesDoc {
    pub transforms: Vec<[[f64; 4]; 4]>,
}

pub fn load_bones(path: &Path) -> Result<BoneTransforms> {
    let doc: BonesDoc = load_toml(path)?;
    let bones = BoneTransforms(doc.transforms.into_iter().map(Mat4).collect());
    bones.validate().map_err(|e| semantic(path, e))?;
    Ok(bones)
}

pub fn save_bones(path: &Path, bones: &BoneTransforms) -> Result<()> {
    let doc = BonesDoc { transforms: bones.0.iter().map(|m| m.0).collect() };
    write_text(path, &toml::to_string(&doc).expect("bones serialize"))
}

/// A target view: camera file and RGB PNG, relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewDoc {
    pub camera: PathBuf,
    pub image: PathBuf,
}

/// Training views plus optional held-out views that are only evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestDoc {
    pub views: Vec<ViewDoc>,
    #[serde(default)]
    pub holdout: Vec<ViewDoc>,
}

pub fn load_manifest(path: &Path) -> Result<ManifestDoc> {
    let mut doc: ManifestDoc = load_toml(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    for v in doc.views.iter_mut().chain(doc.holdout.iter_mut()) {
        v.camera = dir.join(&v.camera);
        v.image = dir.join(&v.image);
    }
    Ok(doc)
}
