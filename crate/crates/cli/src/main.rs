//! `diffuse-render`: render, orbit, gradient-check and fit skeleton scenes,
//! and recover root depth from 2D keypoints.
//!
//! Every failure prints one line `ERROR:<exit code>: <message>` on standard
//! error. Exit codes: 0 success, 1 validation or parse failure, 2 numerical
//! failure, 3 gradient check failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use diffuse_render::autodiff::{grad_check, ActiveBlocks, Block, LossKind, DEFAULT_FD_STEP};
use diffuse_render::camera::{orbit_cameras, CameraModel};
use diffuse_render::fit::{
    fit, FitConfig, DEFAULT_APPEARANCE_WEIGHT, DEFAULT_IMAGE_WEIGHT, DEFAULT_ITERATIONS, DEFAULT_STEP_SIZE,
    DEFAULT_TOL,
};
use diffuse_render::geometry::Vec3;
use diffuse_render::io::{
    default_channel_map, load_depth_query, load_scene, read_fimg, save_scene, write_fimg, write_preview, SceneFile,
    INPUT_CAMERA,
};
use diffuse_render::renderer::{render, FeatureImage};
use diffuse_render::skeleton::{primitives_from_pose, solve_root_depth, Pose2D};
use diffuse_render::Error;

const EXIT_INPUT: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_GRADCHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "diffuse-render", version, about = "Differentiable renderer of diffuse Gaussian limb primitives")]
struct Cli {
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene through one of its cameras to a feature image.
    Render(RenderArgs),
    /// Render frames from cameras orbiting a point.
    Orbit(OrbitArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Fit pose, widths and appearances to a target feature image.
    Fit(FitArgs),
    /// Recover the root depth from 2D keypoints and a relative 3D pose.
    Depth(DepthArgs),
}

#[derive(Args)]
struct PreviewArgs {
    /// Channels shown as red, green and blue.
    #[arg(long, value_delimiter = ',')]
    channels: Option<Vec<usize>>,
    /// Value mapped to 0.
    #[arg(long, default_value_t = 0.0)]
    lo: f64,
    /// Value mapped to 255.
    #[arg(long, default_value_t = 1.0)]
    hi: f64,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value = INPUT_CAMERA)]
    camera: String,
    #[arg(long)]
    out: PathBuf,
    /// Also write an 8-bit PPM preview.
    #[arg(long)]
    preview: Option<PathBuf>,
    /// Overrides the scene's alpha.
    #[arg(long)]
    alpha: Option<f64>,
    #[command(flatten)]
    view: PreviewArgs,
}

#[derive(Args)]
struct OrbitArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Orbit centre `x,y,z` (default: mean joint position).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    center: Option<Vec<f64>>,
    #[arg(long)]
    radius: f64,
    /// Degrees above the horizontal plane.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    elevation: f64,
    #[arg(long)]
    frames: usize,
    #[arg(long)]
    out_dir: PathBuf,
    /// Camera whose intrinsics and image size every frame uses.
    #[arg(long, default_value = INPUT_CAMERA)]
    template: String,
    /// Also write `frame_NNNN.ppm` previews.
    #[arg(long)]
    preview: bool,
    #[command(flatten)]
    view: PreviewArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    L1,
    L2,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::L1 => LossKind::L1,
            LossArg::L2 => LossKind::L2,
        }
    }
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value = INPUT_CAMERA)]
    camera: String,
    /// Target image (default: all zeros).
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Relative central-difference step.
    #[arg(long, default_value_t = DEFAULT_FD_STEP)]
    step: f64,
    #[arg(long, value_enum, default_value = "l2")]
    loss: LossArg,
    /// Blocks to check: joints, widths, appearances, background.
    #[arg(long, value_delimiter = ',', default_value = "joints,widths,appearances,background")]
    blocks: Vec<String>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long, default_value = INPUT_CAMERA)]
    camera: String,
    /// Fitted scene.
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration loss and gradient norm as TSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    iterations: usize,
    #[arg(long, default_value_t = DEFAULT_STEP_SIZE)]
    step: f64,
    #[arg(long, value_enum, default_value = "l2")]
    loss: LossArg,
    /// Alpha schedule, e.g. `1,0.1,0.025` (default: the scene's alpha).
    #[arg(long, value_delimiter = ',')]
    anneal: Vec<f64>,
    /// Blocks to optimise: joints, widths, appearances, background.
    #[arg(long, value_delimiter = ',', default_value = "joints,appearances")]
    blocks: Vec<String>,
    /// Plain gradient descent instead of Adam.
    #[arg(long)]
    plain: bool,
    #[arg(long, default_value_t = DEFAULT_IMAGE_WEIGHT)]
    image_weight: f64,
    #[arg(long, default_value_t = DEFAULT_APPEARANCE_WEIGHT)]
    appearance_weight: f64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Args)]
struct DepthArgs {
    #[arg(long)]
    scene: PathBuf,
    /// TOML with `points` (pixels, one per joint) and optional `relative`
    /// offsets (default: the scene pose's).
    #[arg(long)]
    pose2d: PathBuf,
    #[arg(long, default_value = INPUT_CAMERA)]
    camera: String,
}

enum Failure {
    Lib(Error),
    Usage(String),
    GradCheck(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Lib(e) if e.is_numerical() => EXIT_NUMERICAL,
            Failure::Lib(_) | Failure::Usage(_) => EXIT_INPUT,
            Failure::GradCheck(_) => EXIT_GRADCHECK,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Lib(e) => e.to_string(),
            Failure::Usage(m) | Failure::GradCheck(m) => m.clone(),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&Failure::Usage(first_line(&e.to_string()))),
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(&Failure::Usage(format!("cannot set thread count: {e}")));
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(&f),
    }
}

fn first_line(s: &str) -> String {
    s.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments").trim().to_string()
}

fn fail(f: &Failure) -> ExitCode {
    eprintln!("ERROR:{}: {}", f.code(), f.message().replace('\n', " "));
    ExitCode::from(f.code())
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Render(a) => cmd_render(a),
        Command::Orbit(a) => cmd_orbit(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Depth(a) => cmd_depth(a),
    }
}

fn render_scene(scene: &SceneFile, cam: &CameraModel, alpha: Option<f64>) -> CliResult<FeatureImage> {
    let mut cfg = scene.render_config_for(cam);
    if let Some(a) = alpha {
        cfg.alpha = a;
    }
    let prims = primitives_from_pose(&scene.pose, &scene.graph)?;
    Ok(render(&prims, &scene.appearances, cam, &cfg)?)
}

fn preview(img: &FeatureImage, path: &Path, view: &PreviewArgs) -> CliResult {
    let map = match view.channels.as_deref() {
        Some(&[r, g, b]) => [r, g, b],
        Some(_) => return Err(Failure::Usage("--channels takes three comma-separated indices".into())),
        None => default_channel_map(img.channels),
    };
    Ok(write_preview(img, path, map, view.lo, view.hi)?)
}

fn cmd_render(a: RenderArgs) -> CliResult {
    let scene = load_scene(&a.scene)?;
    let cam = scene.camera(&a.camera)?;
    let img = render_scene(&scene, cam, a.alpha)?;
    write_fimg(&img, &a.out)?;
    if let Some(p) = &a.preview {
        preview(&img, p, &a.view)?;
    }
    Ok(())
}

fn cmd_orbit(a: OrbitArgs) -> CliResult {
    let scene = load_scene(&a.scene)?;
    let template = scene.camera(&a.template)?;
    let center = match a.center.as_deref() {
        Some(&[x, y, z]) => Vec3::new(x, y, z),
        Some(_) => return Err(Failure::Usage("--center takes three comma-separated coordinates".into())),
        None if scene.pose.is_empty() => Vec3::zeros(),
        None => scene.pose.joints.iter().sum::<Vec3>() / scene.pose.len() as f64,
    };
    let cams = orbit_cameras(&center, a.radius, a.elevation.to_radians(), a.frames, template)?;
    fs::create_dir_all(&a.out_dir).map_err(Error::from)?;
    for (k, cam) in cams.iter().enumerate() {
        let img = render_scene(&scene, cam, None)?;
        write_fimg(&img, &a.out_dir.join(format!("frame_{k:04}.fimg")))?;
        if a.preview {
            preview(&img, &a.out_dir.join(format!("frame_{k:04}.ppm")), &a.view)?;
        }
    }
    println!("{} frames written to {}", cams.len(), a.out_dir.display());
    Ok(())
}

fn parse_blocks(names: &[String]) -> CliResult<ActiveBlocks> {
    names.iter().try_fold(ActiveBlocks::none(), |acc, n| {
        Block::from_name(n.trim())
            .map(|b| acc.with(b, true))
            .ok_or_else(|| Failure::Usage(format!("unknown parameter block `{n}`")))
    })
}

fn load_target(path: Option<&Path>, cam: &CameraModel, channels: usize) -> CliResult<FeatureImage> {
    match path {
        Some(p) => Ok(read_fimg(p)?),
        None => Ok(FeatureImage::zeros(cam.height, cam.width, channels)),
    }
}

fn cmd_gradcheck(a: GradcheckArgs) -> CliResult {
    let scene = load_scene(&a.scene)?;
    let cam = scene.camera(&a.camera)?;
    let cfg = scene.render_config_for(cam);
    let target = load_target(a.target.as_deref(), cam, cfg.channels())?;
    let params = scene.params().with_active(parse_blocks(&a.blocks)?);
    let report = grad_check(&params, &scene.graph, cam, &cfg, &target, a.loss.into(), a.step, a.tol)?;
    print!("{report}");
    if report.passed() {
        println!("gradcheck passed (tol {:e})", a.tol);
        Ok(())
    } else {
        let failed: Vec<_> = report.blocks.iter().filter(|b| !b.passed).map(|b| b.block.name()).collect();
        Err(Failure::GradCheck(format!(
            "gradient check failed for {} (tol {:e})",
            failed.join(", "),
            a.tol
        )))
    }
}

fn cmd_fit(a: FitArgs) -> CliResult {
    let scene = load_scene(&a.scene)?;
    let cam = scene.camera(&a.camera)?;
    let cfg = scene.render_config_for(cam);
    let target = read_fimg(&a.target)?;
    let fcfg = FitConfig {
        iterations: a.iterations,
        step_size: a.step,
        adaptive: !a.plain,
        loss_kind: a.loss.into(),
        image_weight: a.image_weight,
        appearance_weight: a.appearance_weight,
        active: parse_blocks(&a.blocks)?,
        tol: a.tol,
        alpha_schedule: a.anneal.clone(),
        pose: None,
    };
    let trace = fit(&scene.params(), &scene.graph, cam, &cfg, &target, &fcfg)?;
    if let Some(p) = &a.trace {
        fs::write(p, trace.to_tsv()).map_err(Error::from)?;
    }
    save_scene(&scene.with_params(&trace.params)?, &a.out)?;
    println!(
        "{} iterations, loss {:e} -> {:e}",
        trace.losses.len(),
        trace.losses.first().copied().unwrap_or(trace.final_loss),
        trace.final_loss
    );
    Ok(())
}

fn cmd_depth(a: DepthArgs) -> CliResult {
    let scene = load_scene(&a.scene)?;
    let cam = scene.camera(&a.camera)?;
    let query = load_depth_query(&a.pose2d)?;
    let rel = query.relative.clone().unwrap_or_else(|| scene.pose.relative());
    let points: Pose2D = query.normalized(cam)?;
    if points.points.len() != rel.offsets.len() + 1 {
        return Err(Failure::Lib(Error::ShapeMismatch(format!(
            "{} keypoints for {} relative offsets",
            points.points.len(),
            rel.offsets.len()
        ))));
    }
    let z = solve_root_depth(&points, &rel)?;
    println!("{z}");
    Ok(())
}
