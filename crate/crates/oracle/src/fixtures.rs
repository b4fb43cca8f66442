//! Deterministic scenes shared by tests and the golden-image tool.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use skelsplat_core::fit::{initial_cloud, render_color, FitConfig, TargetView};
use skelsplat_core::gaussian::GaussianCloud;
use skelsplat_core::geometry::{Camera, Joint, Skeleton, Vec3};
use skelsplat_core::raster::RasterConfig;
use skelsplat_core::skinning::{SegmentationView, TwoBoneFixture};

/// A 20-joint standing figure in a T-pose, y up, facing +z, in meters.
/// Two of its 17 limbs join joints of the same region and are skipped by
/// default densification, leaving 15 cylinders: `15·200 + 2·500 = 4000` points.
pub fn sample_skeleton() -> Skeleton {
    let j = |name: &str, x: f64, y: f64, z: f64| Joint::new(name, Vec3::new(x, y, z));
    let joints = vec![
        j("head_top", 0.0, 1.75, 0.0),
        j("nose", 0.0, 1.60, 0.10),
        j("chin", 0.0, 1.52, 0.06),
        j("neck", 0.0, 1.45, 0.0),
        j("l_shoulder", 0.18, 1.40, 0.0),
        j("r_shoulder", -0.18, 1.40, 0.0),
        j("l_hip", 0.10, 0.95, 0.0),
        j("r_hip", -0.10, 0.95, 0.0),
        j("chest", 0.0, 1.25, 0.05),
        j("l_elbow", 0.45, 1.40, 0.0),
        j("l_wrist", 0.70, 1.40, 0.0),
        j("r_elbow", -0.45, 1.40, 0.0),
        j("r_wrist", -0.70, 1.40, 0.0),
        j("l_knee", 0.11, 0.52, 0.02),
        j("l_ankle", 0.11, 0.10, 0.0),
        j("r_knee", -0.11, 0.52, 0.02),
        j("r_ankle", -0.11, 0.10, 0.0),
        j("l_toe", 0.12, 0.02, 0.15),
        j("r_toe", -0.12, 0.02, 0.15),
        j("pelvis", 0.0, 0.95, 0.0),
    ];
    let limbs = vec![
        (0, 1),
        (2, 3),
        (3, 4),
        (3, 5),
        (4, 5),
        (4, 9),
        (9, 10),
        (5, 11),
        (11, 12),
        (6, 13),
        (13, 14),
        (7, 15),
        (15, 16),
        (14, 17),
        (16, 18),
        (3, 8),
        (8, 19),
    ];
    Skeleton::new(joints, limbs, vec![0, 1, 2], vec![4, 5, 6, 7, 8]).expect("valid sample skeleton")
}

/// Camera on a circle of radius `distance` around the figure's middle,
/// `azimuth` radians from the +z axis, slightly raised.
pub fn orbit_camera(azimuth: f64, distance: f64, size: u32) -> Camera {
    let target = Vec3::new(0.0, 0.9, 0.0);
    let eye = target + Vec3::new(distance * azimuth.sin(), 0.25, distance * azimuth.cos());
    let focal = size as f64 * 1.25;
    Camera::look_at(eye, target, Vec3::new(0.0, 1.0, 0.0), focal, size, size).expect("valid orbit camera")
}

/// Normal jitter of every center with standard deviation `sigma`.
pub fn jittered(cloud: &GaussianCloud, sigma: f64, seed: u64) -> GaussianCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = cloud.clone();
    for m in &mut out.means {
        let d: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        *m += Vec3::from_array(d) * sigma;
    }
    out
}

/// Initial cloud of the sample skeleton with colors that vary by position,
/// so renders have texture.
pub fn colored_sample_cloud(cfg: &FitConfig) -> GaussianCloud {
    let mut cloud = initial_cloud(&sample_skeleton(), cfg).expect("sample skeleton densifies");
    for (c, m) in cloud.colors.iter_mut().zip(&cloud.means) {
        *c = Vec3::new(
            0.5 + 0.4 * (7.0 * m.y).sin(),
            0.5 + 0.4 * (9.0 * m.x + 2.0).sin(),
            0.5 + 0.4 * (5.0 * (m.x + m.y + m.z)).cos(),
        );
    }
    cloud
}

/// Self-consistency experiment: views of a jittered clone of `base`.
pub struct SelfConsistency {
    pub base: GaussianCloud,
    pub target: GaussianCloud,
    pub train: Vec<TargetView>,
    pub holdout: TargetView,
}

pub fn self_consistency(base: GaussianCloud, sigma: f64, size: u32, train_azimuths: &[f64], holdout_azimuth: f64, raster: &RasterConfig) -> SelfConsistency {
    let target = jittered(&base, sigma, 17);
    let view = |az: f64| {
        let camera = orbit_camera(az, 3.0, size);
        let image = render_color(&target, &camera, raster).expect("target renders");
        TargetView { camera, image }
    };
    SelfConsistency {
        train: train_azimuths.iter().map(|&a| view(a)).collect(),
        holdout: view(holdout_azimuth),
        base,
        target,
    }
}

/// Fat two-bone capsule used for segmentation training. Dense rings keep the
/// silhouette band of isotropic splats thin relative to the limbs.
pub fn segmentation_fixture() -> TwoBoneFixture {
    TwoBoneFixture { length: 0.5, radius: 0.3, rings: 40, around: 112, ..Default::default() }
}

/// Label view from a camera 2.3 m from the joint, looking at it.
pub fn segmentation_view(fx: &TwoBoneFixture, azimuth: f64, elevation: f64, bend: f64, size: u32) -> SegmentationView {
    let d = 2.3;
    let eye = Vec3::new(d * elevation.cos() * azimuth.sin(), d * elevation.sin(), d * elevation.cos() * azimuth.cos());
    let camera = Camera::look_at(eye, Vec3::ZERO, Vec3::new(0.0, 1.0, 0.0), size as f64 * 1.25, size, size)
        .expect("valid segmentation camera");
    SegmentationView { labels: fx.label_image(&camera, bend).expect("labels render"), bones: fx.bones(bend).expect("valid bend"), camera }
}

/// Training set: front and back views of the rest pose, side views of a bent pose.
pub fn segmentation_training_views(fx: &TwoBoneFixture, size: u32) -> Vec<SegmentationView> {
    use core::f64::consts::FRAC_PI_2;
    [(0.0, 0.0), (2.0 * FRAC_PI_2, 0.0), (FRAC_PI_2, 0.7), (3.0 * FRAC_PI_2, 0.7)]
        .iter()
        .map(|&(az, bend)| segmentation_view(fx, az, 0.15, bend, size))
        .collect()
}

/// A camera and pose absent from the training set.
pub fn segmentation_novel_view(fx: &TwoBoneFixture, size: u32) -> SegmentationView {
    segmentation_view(fx, 1.1, 0.45, 0.4, size)
}
