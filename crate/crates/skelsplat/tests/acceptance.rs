//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test -p skelsplat --test acceptance -- 3 6` runs a subset.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use skelsplat_core::densify::{cylinder_limbs, densify_pcd, DensifyConfig, Region};
use skelsplat_core::fit::{evaluate, fit_cloud, FitConfig};
use skelsplat_core::geometry::{Mat4, Quat, Skeleton, Vec3};
use skelsplat_core::image::Image;
use skelsplat_core::loss::{psnr, ssim};
use skelsplat_core::raster::{rasterize, Channels, RasterConfig};
use skelsplat_core::skinning::{
    lbs_deform, miou, render_segmentation, train_segmentation, BoneTransforms, CanonicalTemplate, SegTrainConfig,
    SegmentationSplats, SegmentationView,
};
use skelsplat_oracle::fixtures::{
    colored_sample_cloud, orbit_camera, sample_skeleton, segmentation_fixture, segmentation_novel_view,
    segmentation_training_views, self_consistency,
};
use skelsplat_oracle::gradcheck::{check_scene, GradReport};
use skelsplat_oracle::{random_scene, render, Payload};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok { Ok(()) } else { Err(msg()) }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(elapsed.as_secs() < limit_s, || format!("took {elapsed:.1?}, limit {limit_s} s"))
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn compositing_oracle() -> Check {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let background = if seed % 2 == 0 { Vec3::ZERO } else { Vec3::new(0.3, 0.6, 0.9) };
        let cfg = RasterConfig { background, ..Default::default() };
        let n = 1 + (seed as usize * 97) % 500;
        let (cloud, cam) = random_scene(1000 + seed, n, 128, 3);
        let fast = rasterize(&cloud, &cam, &Channels::ALL_DENSE, &cfg).map_err(|e| e.to_string())?;
        let slow = render(&cloud, &cam, Payload { color: true, features: true, classes: None }, &cfg);
        worst = worst.max(max_dev(&fast.color, &slow.color)).max(max_dev(&fast.features, &slow.features)).max(max_dev(&fast.alpha, &slow.alpha));
    }
    ensure(worst < 1e-6, || format!("max deviation {worst:e}"))?;
    within(t.elapsed(), 120)?;
    Ok(format!("50 scenes, max deviation {worst:.1e}, {:.1?}", t.elapsed()))
}

fn gradients() -> Check {
    let t = Instant::now();
    let cfg = RasterConfig::default();
    let mut total = GradReport::default();
    let mut seed = 0u64;
    while total.checked() < 200 {
        let (cloud, cam) = random_scene(5000 + seed, 20, 48, 2);
        let want = (200 - total.checked()).min(20);
        total.merge(&check_scene(&cloud, &cam, &cfg, want, seed));
        seed += 1;
    }
    let mut parts = Vec::new();
    for group in ["mean", "rotation", "log_scale", "opacity", "color", "feature"] {
        let tol = if group == "color" || group == "feature" { 1e-4 } else { 1e-3 };
        let err = total.worst(group);
        let n = total.groups.iter().find(|g| g.0 == group).map_or(0, |g| g.2);
        ensure(n > 0, || format!("group {group} was never sampled"))?;
        ensure(err < tol, || format!("{group}: relative error {err:e} (tolerance {tol:e})"))?;
        parts.push(format!("{group} {err:.1e}"));
    }
    within(t.elapsed(), 300)?;
    Ok(format!("{} coordinates ({} near a cutoff skipped): {}", total.checked(), total.skipped, parts.join(", ")))
}

fn self_consistency_fit() -> Check {
    let t = Instant::now();
    let cfg = FitConfig { steps: 3000, ..Default::default() };
    let base = colored_sample_cloud(&cfg);
    let azimuths: Vec<f64> = (0..8).map(|i| i as f64 * std::f64::consts::TAU / 8.0).collect();
    let sc = self_consistency(base.clone(), 0.02, 128, &azimuths, 0.3, &cfg.raster);
    let (p0, _) = evaluate(&base, &sc.holdout, &cfg.raster).map_err(|e| e.to_string())?;
    let out = fit_cloud(base, sample_skeleton().joints.len(), &sc.train, &cfg).map_err(|e| e.to_string())?;
    let (p, s) = evaluate(&out.cloud, &sc.holdout, &cfg.raster).map_err(|e| e.to_string())?;
    let d = (1.0 - s) / 2.0;
    ensure(p >= 40.0 && d <= 0.005, || format!("held-out PSNR {p:.2} dB, D-SSIM {d:.5}"))?;
    // Whole rounds over the views: 40-step block means of the loss.
    let blocks: Vec<f64> = out.history.chunks_exact(40).map(|c| c.iter().map(|r| r.total).sum::<f64>() / 40.0).collect();
    let falls = blocks.windows(2).all(|w| w[1] < w[0]);
    ensure(falls, || "40-step block means of the loss do not decrease".into())?;
    within(t.elapsed(), 900)?;
    Ok(format!(
        "held-out PSNR {p0:.2} -> {p:.2} dB, D-SSIM {d:.5}, block-mean loss decreasing over {} blocks, {:.1?}",
        blocks.len(),
        t.elapsed()
    ))
}

fn axis_distance(p: Vec3, a: Vec3, b: Vec3) -> (f64, f64) {
    let d = b - a;
    let t = (p - a).dot(d) / d.norm_squared();
    ((p - (a + d * t)).norm(), t)
}

fn densification() -> Check {
    let sk = sample_skeleton();
    let cfg = DensifyConfig::default();
    let pc = densify_pcd(&sk, &cfg).map_err(|e| e.to_string())?;
    let limbs = cylinder_limbs(&sk, &cfg);
    let mut worst = 0.0f64;
    for &n in &limbs {
        let (a, b) = sk.limbs[n];
        let (pa, pb) = (sk.position(a), sk.position(b));
        let r = 0.1 * (pb - pa).norm();
        let pts: Vec<Vec3> = pc.points.iter().zip(&pc.regions).filter(|(_, g)| **g == Region::Limb(n as u32)).map(|(p, _)| *p).collect();
        ensure(pts.len() == 200, || format!("limb {n} has {} points", pts.len()))?;
        for p in pts {
            let (dist, t) = axis_distance(p, pa, pb);
            ensure((-1e-12..=1.0 + 1e-12).contains(&t), || format!("limb {n}: axial coordinate {t}"))?;
            worst = worst.max((dist - r).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("radius error {worst:e}"))?;
    let (_, face, torso) = pc.region_counts();
    ensure((face, torso) == (500, 500), || format!("face {face}, torso {torso}"))?;

    let mut equi = 0.0f64;
    for k in 0..24 {
        let f = k as f64;
        let axis = Vec3::new((1.3 * f).sin(), (0.7 * f + 1.0).cos(), 0.5 + (2.1 * f).sin()).normalized();
        let r = Quat::from_axis_angle(axis, 0.37 + 0.91 * f).to_rotmat_unit();
        let t = Vec3::new(2.0 * (0.3 * f).cos(), -1.0 + 0.1 * f, (1.7 * f).sin());
        let moved: Skeleton = sk.map_positions(|p| r.mul_vec(p) + t);
        let m = densify_pcd(&moved, &cfg).map_err(|e| e.to_string())?;
        ensure(m.regions == pc.regions, || "region tags changed under a rigid motion".into())?;
        for (a, b) in m.points.iter().zip(&pc.points) {
            equi = equi.max((*a - (r.mul_vec(*b) + t)).norm());
        }
    }
    ensure(equi <= 1e-9, || format!("rigid equivariance error {equi:e}"))?;
    Ok(format!("{} cylinders x 200 + 500 + 500 points, radius error {worst:.1e}, equivariance error {equi:.1e} over 24 motions", limbs.len()))
}

fn lbs() -> Check {
    let fx = segmentation_fixture();
    let tmpl = fx.template();
    let out = lbs_deform(&tmpl, &BoneTransforms::identity(tmpl.num_bones())).map_err(|e| e.to_string())?;
    ensure(out == tmpl.vertices, || "identity bones moved a vertex".into())?;
    let two = CanonicalTemplate {
        vertices: vec![Vec3::new(0.3, -1.2, 2.5)],
        weights: vec![0.5, 0.5],
        labels: vec![0],
        bone_parents: vec![None, Some(0)],
        num_classes: 1,
    };
    let bones = BoneTransforms(vec![Mat4::translation(Vec3::new(1.0, 0.0, 0.0)), Mat4::translation(Vec3::new(0.0, 1.0, 0.0))]);
    let moved = lbs_deform(&two, &bones).map_err(|e| e.to_string())?[0] - two.vertices[0];
    let err = (moved - Vec3::new(0.5, 0.5, 0.0)).max_abs();
    ensure(err <= 1e-12, || format!("blend error {err:e}"))?;
    Ok(format!("identity exact on {} vertices, blend error {err:.1e}", tmpl.len()))
}

fn pooled_miou(seg: &SegmentationSplats, views: &[SegmentationView], cfg: &RasterConfig) -> Result<f64, String> {
    let (mut pred, mut gt) = (Vec::new(), Vec::new());
    for v in views {
        pred.extend(render_segmentation(seg, &v.bones, &v.camera, cfg).map_err(|e| e.to_string())?.labels);
        gt.extend_from_slice(&v.labels);
    }
    miou(&pred, &gt, seg.template.num_classes + 1).map_err(|e| e.to_string())
}

fn segmentation() -> Check {
    let t = Instant::now();
    let fx = segmentation_fixture();
    let cfg = SegTrainConfig::default();
    let views = segmentation_training_views(&fx, 160);
    let init = SegmentationSplats::new(fx.template(), 0.004, 0.9).map_err(|e| e.to_string())?;
    let (trained, _) = train_segmentation(&init, &views, &cfg).map_err(|e| e.to_string())?;
    let before = pooled_miou(&init, &views, &cfg.raster)?;
    let train = pooled_miou(&trained, &views, &cfg.raster)?;
    let novel = pooled_miou(&trained, &[segmentation_novel_view(&fx, 160)], &cfg.raster)?;
    ensure(train >= 0.95 && novel >= 0.80, || format!("training mIoU {train:.4}, novel {novel:.4}"))?;
    within(t.elapsed(), 600)?;
    Ok(format!("training mIoU {before:.4} -> {train:.4}, novel camera and pose {novel:.4}, {:.1?}", t.elapsed()))
}

fn decode(w: u32, h: u32, c: usize, hex: &str) -> Image {
    let v = (0..hex.len()).step_by(2).map(|i| u8::from_str_radix(&hex[i..i + 2], 16).unwrap() as f64 / 255.0).collect();
    Image::new(w, h, c, v).unwrap()
}

fn metrics() -> Check {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/ssim_pairs.txt");
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    let (mut pairs, mut worst) = (0, 0.0f64);
    while let Some(header) = lines.next() {
        let f: Vec<&str> = header.split_whitespace().collect();
        let (w, h, c) = (f[1].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap());
        let reference: f64 = f[4].parse().unwrap();
        let a = decode(w, h, c, lines.next().unwrap());
        let b = decode(w, h, c, lines.next().unwrap());
        worst = worst.max((ssim(&a, &b).map_err(|e| e.to_string())? - reference).abs());
        pairs += 1;
    }
    ensure(pairs == 20 && worst < 1e-6, || format!("{pairs} pairs, worst SSIM deviation {worst:e}"))?;
    let p = psnr(&Image::filled(32, 32, 3, 0.5), &Image::filled(32, 32, 3, 0.6)).map_err(|e| e.to_string())?;
    ensure((p - 20.0).abs() < 1e-12, || format!("uniform 0.1 error gives {p} dB"))?;
    let same = psnr(&Image::filled(4, 4, 1, 0.2), &Image::filled(4, 4, 1, 0.2)).map_err(|e| e.to_string())?;
    ensure(same == f64::INFINITY, || format!("identical images give {same} dB"))?;
    Ok(format!("SSIM vs scikit-image on {pairs} pairs, worst deviation {worst:.1e}; PSNR of uniform 0.1 error {p} dB"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn collect(dir: &Path, base: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect(&path, base, out);
        } else {
            out.insert(path.strip_prefix(base).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
        }
    }
}

/// Runs every verb with `threads` workers into `dir`; returns its outputs and stdout.
fn run_all(dir: &Path, threads: &str) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    std::fs::create_dir_all(dir).unwrap();
    let cfg = dir.join("short.toml");
    std::fs::write(&cfg, "[optim]\nsteps = 24\n\n[model]\nfeature_dim = 2\n").unwrap();
    let p = |s: &str| dir.join(s).into_os_string();
    let f = |s: &str| fixture(s).into_os_string();
    let runs: Vec<(&str, Vec<std::ffi::OsString>)> = vec![
        ("densify", vec!["densify".into(), "--skeleton".into(), f("sample_skeleton.toml"), "--out".into(), p("cloud.ply"), "--checkpoint".into(), p("init.gsck")]),
        ("render", vec!["render".into(), "--checkpoint".into(), f("scene.gsck"), "--camera".into(), f("scene_camera.toml"), "--out-dir".into(), p("render")]),
        ("fit", vec!["--config".into(), cfg.clone().into_os_string(), "fit".into(), "--skeleton".into(), f("sample_skeleton.toml"), "--targets".into(), f("fit/manifest.toml"), "--out-dir".into(), p("fit")]),
        ("segment", vec!["segment".into(), "--template".into(), f("two_bone_template.toml"), "--bones".into(), f("bones_bent.toml"), "--camera".into(), f("seg_camera.toml"), "--out".into(), p("seg.png"), "--scores".into(), p("scores.gsfd"), "--eval".into(), f("seg_truth.png")]),
        ("eval", vec!["eval".into(), "--pred".into(), p("render/color.png"), "--gt".into(), f("scene_golden.png")]),
    ];
    for (name, args) in runs {
        let o = Command::new(env!("CARGO_BIN_EXE_skelsplat")).arg("--threads").arg(threads).args(&args).output().map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("{name} with --threads {threads}: {}", String::from_utf8_lossy(&o.stderr)));
        }
        std::fs::write(dir.join(format!("{name}.stdout")), &o.stdout).unwrap();
    }
    let mut out = BTreeMap::new();
    collect(dir, dir, &mut out);
    Ok(out)
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let reference = run_all(&tmp.path().join("t1"), "1")?;
    for threads in ["4", "0"] {
        let other = run_all(&tmp.path().join(format!("t{threads}")), threads)?;
        let keys: Vec<&PathBuf> = reference.keys().collect();
        ensure(keys == other.keys().collect::<Vec<_>>(), || format!("--threads {threads} wrote different files"))?;
        for (k, v) in &reference {
            ensure(other[k] == *v, || format!("{} differs between --threads 1 and --threads {threads}", k.display()))?;
        }
    }
    Ok(format!("densify, render, fit, segment and eval: {} outputs bit-identical for --threads 1, 4 and 0 (all cores)", reference.len()))
}

fn performance() -> Check {
    let cloud = colored_sample_cloud(&FitConfig::default());
    let cam = orbit_camera(0.4, 3.0, 512);
    let cfg = RasterConfig::default();
    rasterize(&cloud, &cam, &Channels::COLOR, &cfg).map_err(|e| e.to_string())?;
    let mut times: Vec<Duration> = (0..15)
        .map(|_| {
            let t = Instant::now();
            rasterize(&cloud, &cam, &Channels::COLOR, &cfg).unwrap();
            t.elapsed()
        })
        .collect();
    times.sort();
    let median = times[times.len() / 2];
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    ensure(median < Duration::from_millis(100), || format!("median {median:.1?}"))?;
    Ok(format!("{} splats at 512x512: median {median:.1?} over 15 renders on {threads} thread(s)", cloud.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("compositing oracle equivalence", compositing_oracle),
        ("gradient correctness", gradients),
        ("self-consistency fit", self_consistency_fit),
        ("densification geometry", densification),
        ("LBS identity and blend", lbs),
        ("segmentation training", segmentation),
        ("metric conformance", metrics),
        ("CLI determinism", determinism),
        ("performance gate", performance),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("criterion {n} PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
