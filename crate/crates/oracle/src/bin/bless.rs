//! Regenerates or verifies the committed CLI test fixtures.
//!
//! `bless` compares freshly generated fixtures with the committed ones and
//! fails on any difference. `bless --bless` overwrites them. Golden images
//! come from the brute-force renderer, never from the tiled one.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use skelsplat::config::PipelineConfig;
use skelsplat::formats::binary::save_checkpoint;
use skelsplat::formats::image::{save_labels, save_rgb};
use skelsplat::formats::text::{save_bones, save_camera, save_skeleton, save_template};
use skelsplat_core::fit::initial_cloud;
use skelsplat_core::geometry::{Camera, Vec3};
use skelsplat_core::skinning::{SegmentationSplats, TwoBoneFixture};
use skelsplat_oracle::fixtures::{jittered, orbit_camera, sample_skeleton};
use skelsplat_oracle::{random_scene, render, Payload};

/// Steps of the CLI self-consistency fit.
const FIT_STEPS: usize = 1000;
const FIT_SIZE: u32 = 128;
const FIT_VIEWS: usize = 8;
const HOLDOUT_AZIMUTH: f64 = 0.3;

fn argmax_labels(alpha: &[f64], classes: &[f64], c: usize) -> Vec<u32> {
    (0..alpha.len())
        .map(|p| {
            let mut best = (1.0 - alpha[p], 0u32);
            for k in 0..c {
                if classes[p * c + k] > best.0 {
                    best = (classes[p * c + k], k as u32 + 1);
                }
            }
            best.1
        })
        .collect()
}

fn seg_camera(eye: Vec3, target: Vec3) -> Camera {
    Camera::look_at(eye, target, Vec3::new(0.0, 1.0, 0.0), 80.0, 64, 64).expect("valid camera")
}

fn write_text(path: &Path, text: &str) -> Result<(), String> {
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn generate(dir: &Path) -> Result<(), String> {
    let e = |err: skelsplat::error::IoError| err.to_string();
    std::fs::create_dir_all(dir.join("fit")).map_err(|err| err.to_string())?;
    let cfg = PipelineConfig::default();
    let raster = cfg.raster_config();

    let sk = sample_skeleton();
    save_skeleton(&dir.join("sample_skeleton.toml"), &sk).map_err(e)?;

    // Render golden: a random scene composited by the oracle.
    let (cloud, cam) = random_scene(4242, 300, 96, 3);
    save_checkpoint(&dir.join("scene.gsck"), &cloud).map_err(e)?;
    save_camera(&dir.join("scene_camera.toml"), &cam).map_err(e)?;
    let img = render(&cloud, &cam, Payload { color: true, ..Default::default() }, &raster);
    save_rgb(&dir.join("scene_golden.png"), img.width, img.height, &img.color).map_err(e)?;
    let tiny = Camera::new(1.0, 1.0, 0.0, 0.0, cam.rotation, cam.translation, 1, 1, cam.near).expect("valid camera");
    save_camera(&dir.join("tiny_camera.toml"), &tiny).map_err(e)?;

    // Segmentation golden: identity bones leave the template in place.
    let fx = TwoBoneFixture::default();
    let template = fx.template();
    save_template(&dir.join("two_bone_template.toml"), &template).map_err(e)?;
    save_bones(&dir.join("bones_identity.toml"), &fx.bones(0.0).map_err(|x| x.to_string())?).map_err(e)?;
    save_bones(&dir.join("bones_bent.toml"), &fx.bones(0.6).map_err(|x| x.to_string())?).map_err(e)?;
    let seg_cam = seg_camera(Vec3::new(0.8, 0.3, 2.2), Vec3::ZERO);
    save_camera(&dir.join("seg_camera.toml"), &seg_cam).map_err(e)?;
    save_camera(&dir.join("seg_camera_away.toml"), &seg_camera(Vec3::new(0.0, 0.0, 2.4), Vec3::new(0.0, 0.0, 5.0))).map_err(e)?;
    let c = cfg.model.num_classes;
    let seg = SegmentationSplats::new(template.clone(), cfg.segment.init_scale, cfg.segment.init_opacity)
        .map_err(|x| x.to_string())?;
    let seg_cloud = seg.cloud(&template.vertices);
    let out = render(&seg_cloud, &seg_cam, Payload { classes: Some((&template.labels, c)), ..Default::default() }, &raster);
    save_labels(&dir.join("seg_golden.png"), 64, 64, &argmax_labels(&out.alpha, &out.classes, c)).map_err(e)?;
    let truth = fx.label_image(&seg_cam, 0.0).map_err(|x| x.to_string())?;
    save_labels(&dir.join("seg_truth.png"), 64, 64, &truth).map_err(e)?;

    // Self-consistency fit: targets of a jittered clone of the initialization.
    let mut fit_cfg = PipelineConfig::default();
    fit_cfg.optim.steps = FIT_STEPS;
    fit_cfg.model.feature_dim = 1;
    write_text(&dir.join("fit/config.toml"), &fit_cfg.to_toml())?;
    let base = initial_cloud(&sk, &fit_cfg.fit_config()).map_err(|x| x.to_string())?;
    let target = jittered(&base, 0.02, 17);
    let mut manifest = String::from("# Views of the initialization with centers jittered by 0.02.\n");
    let mut view = |name: &str, azimuth: f64, section: &str| -> Result<(), String> {
        let cam = orbit_camera(azimuth, 3.0, FIT_SIZE);
        let img = render(&target, &cam, Payload { color: true, ..Default::default() }, &raster);
        save_camera(&dir.join(format!("fit/{name}.toml")), &cam).map_err(e)?;
        save_rgb(&dir.join(format!("fit/{name}.png")), img.width, img.height, &img.color).map_err(e)?;
        manifest.push_str(&format!("\n[[{section}]]\ncamera = \"{name}.toml\"\nimage = \"{name}.png\"\n"));
        Ok(())
    };
    for i in 0..FIT_VIEWS {
        view(&format!("view{i}"), i as f64 * std::f64::consts::TAU / FIT_VIEWS as f64, "views")?;
    }
    view("holdout", HOLDOUT_AZIMUTH, "holdout")?;
    write_text(&dir.join("fit/manifest.toml"), &manifest)?;
    Ok(())
}

fn collect(dir: &Path, base: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect(&path, base, out)?;
        } else {
            out.insert(path.strip_prefix(base).expect("inside base").to_path_buf(), std::fs::read(&path)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let mut bless = false;
    let mut dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../skelsplat/tests/fixtures");
    for arg in std::env::args().skip(1) {
        match arg.as_str() {
            "--bless" => bless = true,
            "-h" | "--help" => {
                println!("usage: bless [--bless] [FIXTURE_DIR]");
                return ExitCode::SUCCESS;
            }
            other => dir = PathBuf::from(other),
        }
    }
    let target = if bless { dir.clone() } else { std::env::temp_dir().join(format!("skelsplat-bless-{}", std::process::id())) };
    if let Err(msg) = generate(&target) {
        eprintln!("ERROR: {msg}");
        return ExitCode::FAILURE;
    }
    if bless {
        println!("fixtures written to {}", dir.display());
        return ExitCode::SUCCESS;
    }
    let (mut fresh, mut committed) = (BTreeMap::new(), BTreeMap::new());
    let read = collect(&target, &target, &mut fresh).and_then(|_| collect(&dir, &dir, &mut committed));
    let _ = std::fs::remove_dir_all(&target);
    if let Err(err) = read {
        eprintln!("ERROR: {err}");
        return ExitCode::FAILURE;
    }
    let drift: Vec<&PathBuf> = fresh.iter().filter(|(p, b)| committed.get(*p) != Some(*b)).map(|(p, _)| p).collect();
    for p in &drift {
        println!("drift {}", p.display());
    }
    if drift.is_empty() {
        println!("{} fixtures match", fresh.len());
        ExitCode::SUCCESS
    } else {
        println!("rerun with --bless to accept");
        ExitCode::FAILURE
    }
}
