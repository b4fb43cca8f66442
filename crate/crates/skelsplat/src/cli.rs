//! Command-line verbs. Results go to stdout, diagnostics and timings to stderr.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use skelsplat_core::densify::densify_pcd;
use skelsplat_core::fit::{evaluate, fit_step1, TargetView};
use skelsplat_core::gaussian::GaussianCloud;
use skelsplat_core::image::Image;
use skelsplat_core::loss::{psnr, ssim};
use skelsplat_core::raster::{rasterize, Channels};
use skelsplat_core::skinning::{miou, render_segmentation, SegmentationSplats};
use skelsplat_core::Error as CoreError;

use crate::config::PipelineConfig;
use crate::error::{IoError, Result};
use crate::formats::binary::{save_checkpoint, save_dump, save_fit_state, load_checkpoint};
use crate::formats::history::save_history;
use crate::formats::image::{load_labels, load_rgb, save_labels, save_rgb};
use crate::formats::ply::save_ply;
use crate::formats::text::{load_bones, load_camera, load_manifest, load_skeleton, load_template};

#[derive(Debug, Parser)]
#[command(name = "skelsplat", version, about = "Skeleton-driven Gaussian splatting")]
pub struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the sampling seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Samples the initial point cloud of a skeleton.
    Densify(DensifyArgs),
    /// Renders a checkpoint from a camera.
    Render(RenderArgs),
    /// Fits residuals to target views.
    Fit(FitArgs),
    /// Renders a skinned segmentation template.
    Segment(SegmentArgs),
    /// Compares two images (PSNR and SSIM) or two label maps (mIoU).
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct DensifyArgs {
    #[arg(long)]
    pub skeleton: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also writes the initialized splats.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub camera: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub skeleton: PathBuf,
    /// Manifest listing training and held-out views.
    #[arg(long)]
    pub targets: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub template: PathBuf,
    #[arg(long)]
    pub bones: PathBuf,
    #[arg(long)]
    pub camera: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Soft class scores (float dump, background first).
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Ground-truth label PNG; prints mIoU.
    #[arg(long)]
    pub eval: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Treat both images as label maps.
    #[arg(long)]
    pub labels: bool,
}

/// Parses arguments, runs the command on a pool of `--threads` workers and
/// returns the process exit code.
pub fn main_with_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            if code == 0 {
                let _ = e.print();
            } else {
                eprintln!("ERROR 2: {}", e.to_string().lines().next().unwrap_or("invalid arguments"));
            }
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("ERROR 3: cannot start {} worker threads: {e}", cli.threads);
            return 3;
        }
    };
    let mut buf: Vec<u8> = Vec::new();
    let result = pool.install(|| run(&cli, &mut buf));
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(&buf);
    let _ = stdout.flush();
    match result {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            let msg = e.to_string().replace('\n', " ");
            eprintln!("ERROR {code}: {msg}");
            code
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.densify.seed = seed;
    }
    eprintln!("# configuration\n{}", cfg.to_toml());
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| IoError::io(Path::new("<stdout>"), e))
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Densify(a) => densify(&cfg, a, out),
        Command::Render(a) => render(&cfg, a, out),
        Command::Fit(a) => fit(&cfg, a, out),
        Command::Segment(a) => segment(&cfg, a, out),
        Command::Eval(a) => eval(&cfg, a, out),
    }
}

fn densify(cfg: &PipelineConfig, a: &DensifyArgs, out: &mut dyn Write) -> Result<()> {
    let sk = load_skeleton(&a.skeleton)?;
    let pcd = densify_pcd(&sk, &cfg.densify_config())?;
    save_ply(&a.out, &pcd)?;
    if let Some(p) = &a.checkpoint {
        let fc = cfg.fit_config();
        save_checkpoint(p, &GaussianCloud::from_point_cloud(&pcd, &fc.init)?)?;
    }
    let (limbs, face, torso) = pcd.region_counts();
    emit(out, &format!("points {}\nlimb_points {limbs}\nface_points {face}\ntorso_points {torso}\n", pcd.len()))
}

fn render(cfg: &PipelineConfig, a: &RenderArgs, out: &mut dyn Write) -> Result<()> {
    let cloud = load_checkpoint(&a.checkpoint)?;
    let cam = load_camera(&a.camera)?;
    let rc = cfg.raster_config();
    let start = Instant::now();
    let img = rasterize(&cloud, &cam, &Channels::ALL_DENSE, &rc)?;
    eprintln!("frame rendered in {:.3} ms", start.elapsed().as_secs_f64() * 1e3);
    create_dir(&a.out_dir)?;
    save_rgb(&a.out_dir.join("color.png"), img.width, img.height, &img.color)?;
    save_dump(&a.out_dir.join("alpha.gsfd"), img.width, img.height, 1, &img.alpha)?;
    save_dump(&a.out_dir.join("features.gsfd"), img.width, img.height, img.feature_dim, &img.features)?;
    let covered = img.alpha.iter().filter(|&&v| v > 0.0).count();
    emit(out, &format!("rendered {}x{} splats {} covered_pixels {covered}\n", img.width, img.height, cloud.len()))
}

fn load_views(docs: &[crate::formats::text::ViewDoc]) -> Result<Vec<TargetView>> {
    docs.iter()
        .map(|v| {
            let camera = load_camera(&v.camera)?;
            let image = load_rgb(&v.image)?;
            if image.width != camera.width || image.height != camera.height {
                return Err(IoError::format(&v.image, format!("image is {}x{}, camera expects {}x{}", image.width, image.height, camera.width, camera.height)));
            }
            Ok(TargetView { camera, image })
        })
        .collect()
}

fn fit(cfg: &PipelineConfig, a: &FitArgs, out: &mut dyn Write) -> Result<()> {
    let sk = load_skeleton(&a.skeleton)?;
    let manifest = load_manifest(&a.targets)?;
    if manifest.views.is_empty() {
        return Err(IoError::format(&a.targets, "the manifest lists no training views"));
    }
    let views = load_views(&manifest.views)?;
    let holdout = load_views(&manifest.holdout)?;
    create_dir(&a.out_dir)?;
    let fc = cfg.fit_config();
    let start = Instant::now();
    let result = match fit_step1(&sk, &views, &fc) {
        Ok(r) => r,
        Err(CoreError::Diverged { step, reason, history }) => {
            save_history(&a.out_dir.join("history.txt"), &history)?;
            return Err(CoreError::Diverged { step, reason, history }.into());
        }
        Err(e) => return Err(e.into()),
    };
    eprintln!("fit finished in {:.1} s", start.elapsed().as_secs_f64());
    save_checkpoint(&a.out_dir.join("checkpoint.gsck"), &result.cloud)?;
    save_checkpoint(&a.out_dir.join("base.gsck"), &result.base)?;
    save_fit_state(&a.out_dir.join("fit_state.gsfs"), &result.state)?;
    save_history(&a.out_dir.join("history.txt"), &result.history)?;
    let mut report = String::new();
    for (kind, list) in [("train", &views), ("holdout", &holdout)] {
        for (i, v) in list.iter().enumerate() {
            let (p, s) = evaluate(&result.cloud, v, &fc.raster)?;
            report.push_str(&format!("{kind} {i} psnr {p:.4} ssim {s:.6}\n"));
        }
    }
    std::fs::write(a.out_dir.join("report.txt"), &report).map_err(|e| IoError::io(&a.out_dir, e))?;
    emit(out, &report)
}

fn segment(cfg: &PipelineConfig, a: &SegmentArgs, out: &mut dyn Write) -> Result<()> {
    let template = load_template(&a.template, cfg.model.num_classes)?;
    let bones = load_bones(&a.bones)?;
    let cam = load_camera(&a.camera)?;
    let seg = SegmentationSplats::new(template, cfg.segment.init_scale, cfg.segment.init_opacity)?;
    let r = render_segmentation(&seg, &bones, &cam, &cfg.raster_config())?;
    save_labels(&a.out, cam.width, cam.height, &r.labels)?;
    if let Some(p) = &a.scores {
        let c = r.output.num_classes;
        let mut data = Vec::with_capacity(r.labels.len() * (c + 1));
        for px in 0..r.labels.len() {
            data.push(1.0 - r.output.alpha[px]);
            data.extend_from_slice(&r.output.segmentation[px * c..(px + 1) * c]);
        }
        save_dump(p, cam.width, cam.height, c + 1, &data)?;
    }
    let mut text = format!("segmented {}x{} classes {}\n", cam.width, cam.height, cfg.model.num_classes);
    if let Some(gt_path) = &a.eval {
        let (w, h, gt) = load_labels(gt_path)?;
        if (w, h) != (cam.width, cam.height) {
            return Err(IoError::format(gt_path, "ground truth size differs from the camera"));
        }
        let m = miou(&r.labels, &gt, cfg.model.num_classes + 1).map_err(|e| IoError::format(gt_path, e.to_string()))?;
        text.push_str(&format!("miou {m:.6}\n"));
    }
    emit(out, &text)
}

fn eval(cfg: &PipelineConfig, a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    if a.labels {
        let (pw, ph, pred) = load_labels(&a.pred)?;
        let (gw, gh, gt) = load_labels(&a.gt)?;
        if (pw, ph) != (gw, gh) {
            return Err(IoError::format(&a.gt, "label images differ in size"));
        }
        let m = miou(&pred, &gt, cfg.model.num_classes + 1).map_err(|e| IoError::format(&a.pred, e.to_string()))?;
        return emit(out, &format!("miou {m:.6}\n"));
    }
    let pred: Image = load_rgb(&a.pred)?;
    let gt = load_rgb(&a.gt)?;
    let p = psnr(&pred, &gt).map_err(|e| IoError::format(&a.pred, e.to_string()))?;
    let s = ssim(&pred, &gt).map_err(|e| IoError::format(&a.pred, e.to_string()))?;
    emit(out, &format!("psnr {p:.4}\nssim {s:.6}\n"))
}
