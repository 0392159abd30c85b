use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use lidarcam::calibrator::{calibrate, CalibConfig};
use lidarcam::initializer::{initialize, InitOptions, SphericalConfig};
use lidarcam::io::{read_bundle, read_json, write_bundle, write_json, write_pose, PoseJson};
use lidarcam::report::{eval_csv, write_calibration_outputs, EvalRow};
use lidarcam::synth::{corrupt_labels, generate, perturb, pose_error, SceneSpec};
use lidarcam::{Error, Pose};

#[derive(Parser, Debug)]
#[command(
    name = "lidarcam",
    version,
    about = "Targetless LiDAR-camera extrinsic calibration from semantic labels"
)]
struct Cli {
    /// JSON configuration file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic bundle with ground truth.
    Synth(SynthArgs),
    /// Estimate an initial extrinsic from a bundle.
    Init(InitArgs),
    /// Refine an extrinsic by maximizing the MI estimate.
    Calibrate(CalibrateArgs),
    /// Run seeded sweeps over frame counts and label noise.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    frames: usize,
    #[arg(long)]
    out: PathBuf,
    /// Label noise rate applied after generation.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
}

#[derive(Args, Debug)]
struct InitArgs {
    /// Bundle directory or manifest path.
    #[arg(long)]
    data: PathBuf,
    /// Output report JSON.
    #[arg(long)]
    out: PathBuf,
    /// Also write the aggregate pose to this file.
    #[arg(long)]
    pose_out: Option<PathBuf>,
    #[arg(long)]
    correspondences: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Pose JSON or an init report.
    #[arg(long)]
    init: PathBuf,
    /// Output directory for report.json, trace.csv and timing.json.
    #[arg(long)]
    out: PathBuf,
    /// Manifest holding the ground-truth pose; adds error columns to the trace.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Comma-separated frame counts.
    #[arg(long, value_delimiter = ',')]
    frames: Option<Vec<usize>>,
    /// Comma-separated label noise rates.
    #[arg(long, value_delimiter = ',')]
    noise: Option<Vec<f64>>,
    /// Number of seeded trials per sweep point.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    iterations: Option<usize>,
}

/// Evaluation sweep settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct EvalConfig {
    frames: Vec<usize>,
    noise: Vec<f64>,
    seeds: usize,
    /// Initial error per axis.
    perturb_deg: f64,
    perturb_m: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            frames: vec![10],
            noise: vec![0.0],
            seeds: 5,
            perturb_deg: 2.0,
            perturb_m: 0.1,
        }
    }
}

/// Contents of `--config`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct RunConfig {
    scene: SceneSpec,
    spherical: Option<SphericalConfig>,
    calib: CalibConfig,
    init: InitOptions,
    eval: EvalConfig,
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Diverged(_) | Error::NonFinite(_) => 4,
            Error::DegenerateScene(_) | Error::DegenerateGeometry(_) | Error::InsufficientCorrespondences(_) => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => read_json(p).map_err(Failure::from),
        None => Ok(RunConfig::default()),
    }
}

fn cmd_synth(cfg: &RunConfig, args: &SynthArgs) -> Result<(), Failure> {
    if args.frames == 0 {
        return Err(usage("--frames must be at least 1"));
    }
    let mut spec = cfg.scene.clone();
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let bundle = generate(&spec, args.frames)?;
    let bundle = corrupt_labels(&bundle, args.noise, spec.seed)?;
    write_bundle(&args.out, &bundle)?;
    eprintln!("wrote {} frames to {}", args.frames, args.out.display());
    Ok(())
}

/// Spherical binning from the config, else the bundle's scene, fitted to the camera.
fn spherical_for(cfg: &RunConfig, manifest: &lidarcam::io::BundleManifest) -> SphericalConfig {
    let base = cfg
        .spherical
        .or(manifest.spec.as_ref().map(|s| s.lidar))
        .unwrap_or(cfg.scene.lidar);
    base.with_camera(&manifest.intrinsics)
}

fn cmd_init(cfg: &RunConfig, args: &InitArgs) -> Result<(), Failure> {
    let bundle = read_bundle(&args.data)?;
    let mut opts = cfg.init;
    if let Some(n) = args.correspondences {
        opts.correspondences = n;
    }
    if let Some(seed) = args.seed {
        opts.seed = seed;
    }
    let spherical = spherical_for(cfg, &bundle.manifest);
    let report = initialize(&bundle.frames, &spherical, &opts)?;
    write_json(&args.out, &report)?;
    for (i, scan) in report.scans.iter().enumerate() {
        if let Err(e) = scan {
            eprintln!("scan {i}: {e}");
        }
    }
    match report.pose {
        Some(pose) => {
            if let Some(p) = &args.pose_out {
                write_pose(p, &pose)?;
            }
            if let Some(gt) = bundle.manifest.ground_truth {
                let (deg, m) = pose_error(&pose, &gt);
                eprintln!("initial pose error: {deg:.3} deg, {m:.4} m");
            }
            Ok(())
        }
        None => Err(Failure {
            code: 3,
            message: format!(
                "initialization failed: {:.0}% of scans are outliers or failed",
                100.0 * report.outlier_fraction
            ),
        }),
    }
}

/// Reads a pose file or the aggregate pose of an init report.
fn read_init_pose(path: &Path) -> Result<Pose, Failure> {
    if !path.exists() {
        return Err(usage(format!("init file {} does not exist", path.display())));
    }
    let value: serde_json::Value = read_json(path)?;
    let pose_value = if value.get("matrix").is_some() {
        value
    } else {
        match value.get("pose") {
            Some(serde_json::Value::Null) | None => {
                return Err(usage(format!("{} holds no pose", path.display())));
            }
            Some(v) => v.clone(),
        }
    };
    let json: PoseJson = serde_json::from_value(pose_value).map_err(|e| usage(e.to_string()))?;
    Ok(json.to_pose()?)
}

fn cmd_calibrate(cfg: &RunConfig, args: &CalibrateArgs) -> Result<(), Failure> {
    let init = read_init_pose(&args.init)?;
    let bundle = read_bundle(&args.data)?;
    let gt = match &args.gt {
        Some(p) => {
            let m: lidarcam::io::BundleManifest = read_json(&lidarcam::io::manifest_path(p))?;
            Some(
                m.ground_truth
                    .ok_or_else(|| usage(format!("{} has no ground truth", p.display())))?,
            )
        }
        None => None,
    };
    let mut calib = cfg.calib.clone();
    if let Some(n) = args.iterations {
        calib.max_iterations = n;
    }
    if let Some(b) = args.batch {
        calib.batch_size = b;
    }
    if let Some(s) = args.seed {
        calib.seed = s;
    }
    let run = calibrate(&bundle.frames, &init, &calib)?;
    let report = write_calibration_outputs(&args.out, &run, &init, &calib, bundle.frames.len(), gt.as_ref())?;
    eprintln!(
        "{} iterations, converged: {}, final MI {:.4}",
        report.iterations,
        report.converged,
        report.final_mi.unwrap_or(f64::NAN)
    );
    if let Some(e) = &report.error {
        eprintln!("final error: {:.3} deg, {:.4} m", e.rot_err_deg, e.trans_err_m);
    }
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, args: &EvalArgs) -> Result<(), Failure> {
    let mut ev = cfg.eval.clone();
    if let Some(f) = &args.frames {
        ev.frames = f.clone();
    }
    if let Some(n) = &args.noise {
        ev.noise = n.clone();
    }
    if let Some(s) = args.seeds {
        ev.seeds = s;
    }
    if ev.frames.is_empty() || ev.noise.is_empty() || ev.seeds == 0 {
        return Err(usage("sweep lists and seed count must be non-empty"));
    }
    if ev.frames.contains(&0) {
        return Err(usage("frame counts must be positive"));
    }
    let mut calib = cfg.calib.clone();
    if let Some(n) = args.iterations {
        calib.max_iterations = n;
    }
    calib.validate()?;
    let max_frames = *ev.frames.iter().max().expect("non-empty");
    let mut rows = Vec::new();
    for trial in 0..ev.seeds {
        let seed = cfg.scene.seed + trial as u64;
        let spec = SceneSpec {
            seed,
            ..cfg.scene.clone()
        };
        let bundle = generate(&spec, max_frames)?;
        let init = perturb(&bundle.ground_truth, ev.perturb_deg, ev.perturb_m, seed);
        for &noise in &ev.noise {
            let noisy = corrupt_labels(&bundle, noise, seed)?;
            for &frames in &ev.frames {
                let run = calibrate(
                    &noisy.frames[..frames],
                    &init,
                    &CalibConfig {
                        seed: calib.seed + trial as u64,
                        ..calib.clone()
                    },
                )?;
                let (rot_err_deg, trans_err_m) = pose_error(&run.pose, &bundle.ground_truth);
                eprintln!("trial {trial} frames {frames} noise {noise}: {rot_err_deg:.3} deg, {trans_err_m:.4} m");
                rows.push(EvalRow {
                    trial,
                    frames,
                    noise,
                    rot_err_deg,
                    trans_err_m,
                    wall_s: run.wall_time_s,
                });
            }
        }
    }
    std::fs::write(&args.out, eval_csv(&rows)).map_err(|e| Failure::from(Error::from(e)))?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Synth(a) => cmd_synth(&cfg, a),
        Command::Init(a) => cmd_init(&cfg, a),
        Command::Calibrate(a) => cmd_calibrate(&cfg, a),
        Command::Eval(a) => cmd_eval(&cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
