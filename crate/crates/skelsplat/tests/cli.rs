use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use skelsplat::formats::binary::{load_checkpoint, save_checkpoint};
use skelsplat::formats::image::{load_labels, load_rgb, quantize};
use skelsplat::formats::ply::load_ply;
use skelsplat_core::gaussian::GaussianCloud;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skelsplat")).args(args.iter().map(|a| a.as_ref())).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), stderr(o));
}

/// The single `ERROR <code>:` line of a failed run.
fn error_line(o: &Output, code: i32) -> String {
    assert_eq!(o.status.code(), Some(code), "{}", stderr(o));
    let err = stderr(o);
    let lines: Vec<&str> = err.lines().filter(|l| l.starts_with("ERROR")).collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with(&format!("ERROR {code}: ")), "{}", lines[0]);
    lines[0].to_string()
}

#[test]
fn densify_sample_skeleton() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cloud.ply");
    let o = run(&[&"densify", &"--skeleton", &fixture("sample_skeleton.toml"), &"--out", &out]);
    assert_ok(&o);
    assert!(stdout(&o).contains("points 4000\n"), "{}", stdout(&o));
    assert!(stdout(&o).contains("face_points 500\ntorso_points 500\n"));
    assert_eq!(load_ply(&out).unwrap().len(), 15 * 200 + 1000);
    assert!(stderr(&o).contains("# configuration"), "configuration is printed at startup");
}

#[test]
fn densify_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.ply"), dir.path().join("b.ply"));
    assert_ok(&run(&[&"densify", &"--skeleton", &fixture("sample_skeleton.toml"), &"--out", &a]));
    assert_ok(&run(&[&"densify", &"--skeleton", &fixture("sample_skeleton.toml"), &"--out", &b]));
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn malformed_skeleton_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let sk = dir.path().join("bad.toml");
    std::fs::write(&sk, "limbs = [[0, 1]]\n\n[[joints]]\nname = \"a\"\nposition = [0.0, 1.0]\n").unwrap();
    let o = run(&[&"densify", &"--skeleton", &sk, &"--out", &dir.path().join("x.ply")]);
    let line = error_line(&o, 2);
    assert!(line.contains("position"), "{line}");
    assert!(line.contains("bad.toml:5"), "{line}");

    std::fs::write(&sk, "limbs = [[0, 1]]\n\n[[joints]]\nname = \"a\"\npositon = [0.0, 1.0, 2.0]\n").unwrap();
    let line = error_line(&run(&[&"densify", &"--skeleton", &sk, &"--out", &dir.path().join("x.ply")]), 2);
    assert!(line.contains("positon"), "{line}");
}

#[test]
fn render_matches_the_oracle_golden() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[&"render", &"--checkpoint", &fixture("scene.gsck"), &"--camera", &fixture("scene_camera.toml"), &"--out-dir", &dir.path()]);
    assert_ok(&o);
    let got = load_rgb(&dir.path().join("color.png")).unwrap();
    let golden = load_rgb(&fixture("scene_golden.png")).unwrap();
    assert_eq!((got.width, got.height), (96, 96));
    assert!(got.data == golden.data, "render differs from the golden image");
    assert!(dir.path().join("alpha.gsfd").exists() && dir.path().join("features.gsfd").exists());
    assert!(stderr(&o).contains("frame rendered in"));
}

#[test]
fn render_of_zero_splats_is_background() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("empty.gsck");
    save_checkpoint(&ck, &GaussianCloud::empty(2)).unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[render]\nbackground = [0.2, 0.4, 1.0]\n").unwrap();
    let out = dir.path().join("out");
    assert_ok(&run(&[&"--config", &cfg, &"render", &"--checkpoint", &ck, &"--camera", &fixture("scene_camera.toml"), &"--out-dir", &out]));
    let img = load_rgb(&out.join("color.png")).unwrap();
    let expect = [0.2, 0.4, 1.0].map(|v| quantize(v) as f64 / 255.0);
    assert!(img.data.chunks(3).all(|p| p == expect));
}

#[test]
fn render_single_pixel_camera() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[&"render", &"--checkpoint", &fixture("scene.gsck"), &"--camera", &fixture("tiny_camera.toml"), &"--out-dir", &dir.path()]);
    assert_ok(&o);
    let img = load_rgb(&dir.path().join("color.png")).unwrap();
    assert_eq!((img.width, img.height), (1, 1));
}

#[test]
fn render_without_checkpoint_fails_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.gsck");
    let line = error_line(&run(&[&"render", &"--checkpoint", &missing, &"--camera", &fixture("scene_camera.toml"), &"--out-dir", &dir.path()]), 2);
    assert!(line.contains("nope.gsck"), "{line}");
}

#[test]
fn fit_with_zero_steps_keeps_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[optim]\nsteps = 0\n\n[model]\nfeature_dim = 1\n").unwrap();
    let init = dir.path().join("init.gsck");
    assert_ok(&run(&[&"--config", &cfg, &"densify", &"--skeleton", &fixture("sample_skeleton.toml"), &"--out", &dir.path().join("p.ply"), &"--checkpoint", &init]));
    let out = dir.path().join("fit");
    let o = run(&[&"--config", &cfg, &"fit", &"--skeleton", &fixture("sample_skeleton.toml"), &"--targets", &fixture("fit/manifest.toml"), &"--out-dir", &out]);
    assert_ok(&o);
    assert_eq!(std::fs::read(out.join("checkpoint.gsck")).unwrap(), std::fs::read(&init).unwrap());
    assert_eq!(load_checkpoint(&out.join("checkpoint.gsck")).unwrap().len(), 4000);
    let history = std::fs::read_to_string(out.join("history.txt")).unwrap();
    assert_eq!(history.lines().count(), 1, "only the header");
    assert!(stdout(&o).contains("holdout 0 psnr"));
}

#[test]
fn fit_names_a_missing_target_image() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(fixture("fit/view0.toml"), dir.path().join("view0.toml")).unwrap();
    let manifest = dir.path().join("manifest.toml");
    std::fs::write(&manifest, "[[views]]\ncamera = \"view0.toml\"\nimage = \"absent.png\"\n").unwrap();
    let o = run(&[&"fit", &"--skeleton", &fixture("sample_skeleton.toml"), &"--targets", &manifest, &"--out-dir", &dir.path().join("o")]);
    let line = error_line(&o, 2);
    assert!(line.contains("absent.png"), "{line}");
}

fn report_value(report: &str, kind: &str, key: &str) -> Vec<f64> {
    report
        .lines()
        .filter(|l| l.starts_with(kind))
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            let i = f.iter().position(|&t| t == key).unwrap();
            f[i + 1].parse().unwrap()
        })
        .collect()
}

#[test]
fn fit_recovers_the_self_consistency_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[&"--config", &fixture("fit/config.toml"), &"fit", &"--skeleton", &fixture("sample_skeleton.toml"), &"--targets", &fixture("fit/manifest.toml"), &"--out-dir", &dir.path()]);
    assert_ok(&o);
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert_eq!(report, stdout(&o));
    let holdout = report_value(&report, "holdout", "psnr");
    assert_eq!(holdout.len(), 1);
    assert!(holdout[0] >= 40.0, "{report}");
    assert!(report_value(&report, "train", "psnr").iter().all(|&p| p >= 40.0), "{report}");
    for name in ["checkpoint.gsck", "base.gsck", "fit_state.gsfs", "history.txt"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn segment_identity_pose_matches_the_oracle_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("seg.png");
    let scores = dir.path().join("scores.gsfd");
    let o = run(&[
        &"segment", &"--template", &fixture("two_bone_template.toml"), &"--bones", &fixture("bones_identity.toml"),
        &"--camera", &fixture("seg_camera.toml"), &"--out", &out, &"--scores", &scores, &"--eval", &fixture("seg_golden.png"),
    ]);
    assert_ok(&o);
    assert_eq!(load_labels(&out).unwrap(), load_labels(&fixture("seg_golden.png")).unwrap());
    assert!(stdout(&o).contains("miou 1.000000\n"), "{}", stdout(&o));
    let (w, h, c, data) = skelsplat::formats::binary::load_dump(&scores).unwrap();
    assert_eq!((w, h, c), (64, 64, 7));
    assert_eq!(data.len(), 64 * 64 * 7);
}

#[test]
fn segment_behind_the_camera_is_background() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("seg.png");
    assert_ok(&run(&[
        &"segment", &"--template", &fixture("two_bone_template.toml"), &"--bones", &fixture("bones_bent.toml"),
        &"--camera", &fixture("seg_camera_away.toml"), &"--out", &out,
    ]));
    let (_, _, labels) = load_labels(&out).unwrap();
    assert!(labels.iter().all(|&l| l == 0));
}

#[test]
fn segment_rejects_palette_overflow_as_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[model]\nnum_classes = 300\n").unwrap();
    let o = run(&[
        &"--config", &cfg, &"segment", &"--template", &fixture("two_bone_template.toml"), &"--bones", &fixture("bones_identity.toml"),
        &"--camera", &fixture("seg_camera.toml"), &"--out", &dir.path().join("s.png"),
    ]);
    assert!(error_line(&o, 3).contains("num_classes"));
}

#[test]
fn eval_reports_metrics() {
    let o = run(&[&"eval", &"--pred", &fixture("scene_golden.png"), &"--gt", &fixture("scene_golden.png")]);
    assert_ok(&o);
    assert!(stdout(&o).contains("psnr inf\nssim 1.000000\n"), "{}", stdout(&o));
    let o = run(&[&"eval", &"--labels", &"--pred", &fixture("seg_golden.png"), &"--gt", &fixture("seg_truth.png")]);
    assert_ok(&o);
    let m: f64 = stdout(&o).trim().strip_prefix("miou ").unwrap().parse().unwrap();
    assert!(m > 0.5 && m < 1.0, "{m}");
}

#[test]
fn bad_config_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[optim]\nlamda = 0.3\n").unwrap();
    let o = run(&[&"--config", &cfg, &"densify", &"--skeleton", &fixture("sample_skeleton.toml"), &"--out", &dir.path().join("p.ply")]);
    assert!(error_line(&o, 3).contains("lamda"));
}

#[test]
fn unknown_verb_is_an_input_error() {
    let o = run(&[&"paint"]);
    error_line(&o, 2);
}
