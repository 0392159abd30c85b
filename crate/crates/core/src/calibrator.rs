//! Joint gradient ascent over the critic parameters and the extrinsic pose.
//!
//! Each iteration draws a minibatch of LiDAR points uniformly across all
//! frames, projects them with the current pose, samples soft image labels,
//! and evaluates the DV bound between one-hot LiDAR labels and the sampled
//! labels. The critic ascends the bound with rate alpha; the pose ascends it
//! through a left increment `exp(delta)` with rate beta, which is composed
//! into the pose after every step.

use std::sync::Arc;

use nalgebra::{Vector2, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{accumulate_point_pullback, se3_exp_unchecked, se3_log, CameraIntrinsics, Pose, Twist};
use crate::mine::{ascent_step, dv_pullback, OptimizerState, PairBatch, StatisticsNetwork};
use crate::sampling::{LabelImage, LabelPlanes};

/// LiDAR points (meters, sensor frame) with per-point classes.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloudFrame {
    pub points: Vec<Vector3<f64>>,
    pub labels: Vec<u8>,
    pub num_classes: usize,
}

impl PointCloudFrame {
    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.labels.len() {
            return Err(Error::InvalidArgument("points and labels differ in length".into()));
        }
        if let Some(l) = self.labels.iter().find(|&&l| l as usize >= self.num_classes) {
            return Err(Error::InvalidArgument(format!(
                "point label {l} >= {} classes",
                self.num_classes
            )));
        }
        if !self.points.iter().all(|p| p.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("point coordinates".into()));
        }
        Ok(())
    }
}

/// One synchronized LiDAR scan and camera label image.
#[derive(Debug, Clone)]
pub struct CalibFrame {
    pub cloud: PointCloudFrame,
    pub image: Arc<LabelImage>,
    pub planes: LabelPlanes,
    pub intrinsics: CameraIntrinsics,
}

impl CalibFrame {
    pub fn new(cloud: PointCloudFrame, image: Arc<LabelImage>, intrinsics: CameraIntrinsics) -> Result<Self> {
        let planes = LabelPlanes::from_labels(image.clone());
        let frame = Self {
            cloud,
            image,
            planes,
            intrinsics,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        self.cloud.validate()?;
        self.intrinsics.validate()?;
        if self.cloud.points.is_empty() {
            return Err(Error::InvalidArgument("empty point cloud".into()));
        }
        if self.cloud.num_classes != self.image.num_classes() {
            return Err(Error::InvalidArgument(format!(
                "cloud has {} classes, image has {}",
                self.cloud.num_classes,
                self.image.num_classes()
            )));
        }
        if self.image.width() != self.intrinsics.width || self.image.height() != self.intrinsics.height {
            return Err(Error::InvalidArgument("image size does not match intrinsics".into()));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.cloud.num_classes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibConfig {
    /// Points drawn per iteration, before out-of-view points are dropped.
    pub batch_size: usize,
    pub max_iterations: usize,
    /// Critic learning rate (alpha).
    pub critic_lr: f64,
    /// Pose learning rate (beta).
    pub pose_lr: f64,
    pub decay_every: usize,
    pub decay_factor: f64,
    /// Critic-only iterations before the pose starts moving.
    pub warmup_iterations: usize,
    pub convergence_window: usize,
    pub convergence_threshold: f64,
    /// The returned pose averages this many final iterates (0 keeps the last one).
    pub average_window: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for CalibConfig {
    fn default() -> Self {
        Self {
            batch_size: 2048,
            max_iterations: 4000,
            critic_lr: 1e-4,
            pose_lr: 1e-3,
            decay_every: 1000,
            decay_factor: 0.5,
            warmup_iterations: 200,
            convergence_window: 200,
            convergence_threshold: 1e-4,
            average_window: 200,
            hidden: crate::mine::DEFAULT_HIDDEN.to_vec(),
            seed: 0,
        }
    }
}

impl CalibConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig("batch size must be at least 2".into()));
        }
        if !(self.critic_lr > 0.0 && self.pose_lr > 0.0) {
            return Err(Error::InvalidConfig("learning rates must be positive".into()));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) || self.decay_every == 0 {
            return Err(Error::InvalidConfig(
                "decay must be in (0, 1] with a positive period".into(),
            ));
        }
        if self.convergence_window == 0 {
            return Err(Error::InvalidConfig("convergence window must be positive".into()));
        }
        Ok(())
    }
}

/// Result of a calibration run.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRun {
    pub pose: Pose,
    /// DV estimate per iteration (nats).
    pub mi_trace: Vec<f64>,
    /// Pose after each iteration.
    pub pose_trace: Vec<Pose>,
    /// Out-of-view points dropped per iteration.
    pub dropped_trace: Vec<usize>,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub converged: bool,
}

/// Consecutive iterations without two valid points before giving up.
pub const MAX_EMPTY_ITERATIONS: usize = 50;

struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    fn elapsed_s(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}

/// Minibatch drawn from all frames.
struct Minibatch {
    pairs: PairBatch,
    /// `(frame, camera-frame point, pixel)` per valid row.
    rows: Vec<(usize, Vector3<f64>, Vector2<f64>)>,
    dropped: usize,
}

/// Uniform sampler over the union of all frames' points.
struct PointSampler {
    offsets: Vec<usize>,
    total: usize,
}

impl PointSampler {
    fn new(frames: &[CalibFrame]) -> Self {
        let mut offsets = Vec::with_capacity(frames.len() + 1);
        let mut total = 0;
        offsets.push(0);
        for f in frames {
            total += f.cloud.points.len();
            offsets.push(total);
        }
        Self { offsets, total }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> (usize, usize) {
        let g = rng.random_range(0..self.total);
        let frame = self.offsets.partition_point(|&o| o <= g) - 1;
        (frame, g - self.offsets[frame])
    }
}

fn draw_minibatch<R: Rng>(
    frames: &[CalibFrame],
    sampler: &PointSampler,
    pose: &Pose,
    batch_size: usize,
    rng: &mut R,
) -> Minibatch {
    let c = frames[0].num_classes();
    let mut x = Vec::with_capacity(batch_size * c);
    let mut y = Vec::with_capacity(batch_size * c);
    let mut rows = Vec::with_capacity(batch_size);
    let mut soft = vec![0.0; c];
    let mut dropped = 0;
    for _ in 0..batch_size {
        let (fi, pi) = sampler.draw(rng);
        let frame = &frames[fi];
        let q = pose.transform_point(&frame.cloud.points[pi]);
        let k = &frame.intrinsics;
        match k.project_camera_point(&q) {
            Some(uv) if k.contains(&uv) => {
                frame.planes.sample_into(uv.x, uv.y, &mut soft);
                let label = frame.cloud.labels[pi] as usize;
                x.extend((0..c).map(|k| (k == label) as u8 as f64));
                y.extend_from_slice(&soft);
                rows.push((fi, q, uv));
            }
            _ => dropped += 1,
        }
    }
    Minibatch {
        pairs: PairBatch { dim: c, x, y },
        rows,
        dropped,
    }
}

fn check_inputs(frames: &[CalibFrame], init: &Pose, cfg: &CalibConfig) -> Result<()> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::InvalidArgument("no frames".into()));
    }
    let c = frames[0].num_classes();
    for f in frames {
        f.validate()?;
        if f.num_classes() != c {
            return Err(Error::InvalidArgument("frames disagree on the class count".into()));
        }
    }
    if !init.is_valid(1e-6) {
        return Err(Error::InvalidArgument(
            "initial pose is not a finite rigid transform".into(),
        ));
    }
    Ok(())
}

/// Runs the joint critic/pose ascent from `init`.
pub fn calibrate(frames: &[CalibFrame], init: &Pose, cfg: &CalibConfig) -> Result<CalibrationRun> {
    check_inputs(frames, init, cfg)?;
    let clock = Stopwatch::start();
    let c = frames[0].num_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = StatisticsNetwork::new(2 * c, &cfg.hidden, rng.random())?;
    let mut opt = OptimizerState::new(
        &net,
        cfg.critic_lr,
        cfg.pose_lr,
        cfg.decay_every as u64,
        cfg.decay_factor,
    );
    let sampler = PointSampler::new(frames);

    let mut pose = *init;
    let mut run = CalibrationRun {
        pose,
        mi_trace: Vec::with_capacity(cfg.max_iterations),
        pose_trace: Vec::with_capacity(cfg.max_iterations),
        dropped_trace: Vec::with_capacity(cfg.max_iterations),
        iterations: 0,
        wall_time_s: 0.0,
        converged: false,
    };
    let mut empty_streak = 0;
    let mut last_mi = 0.0;

    for iter in 0..cfg.max_iterations {
        let batch = draw_minibatch(frames, &sampler, &pose, cfg.batch_size, &mut rng);
        run.dropped_trace.push(batch.dropped);
        if batch.rows.len() < 2 {
            empty_streak += 1;
            if empty_streak >= MAX_EMPTY_ITERATIONS {
                return Err(Error::Diverged(format!(
                    "no points in view for {MAX_EMPTY_ITERATIONS} consecutive iterations (iteration {iter})"
                )));
            }
            run.mi_trace.push(last_mi);
            run.pose_trace.push(pose);
            run.iterations = iter + 1;
            continue;
        }
        empty_streak = 0;

        let marginal = batch.pairs.shuffled(&mut rng);
        let grads = dv_pullback(&net, &batch.pairs, &marginal).map_err(|e| match e {
            Error::NonFinite(msg) => Error::NonFinite(format!("{msg} at iteration {iter}")),
            other => other,
        })?;
        ascent_step(&mut net, &mut opt, &grads.theta)?;

        if iter >= cfg.warmup_iterations {
            let grad_pose = pose_gradient(frames, &batch, &grads.joint_y, c);
            let mut delta = [0.0; 6];
            opt.pose.ascend(&mut delta, grad_pose.as_slice())?;
            pose = se3_exp_unchecked(&Twist::from_slice(&delta)).compose(&pose);
        }
        if (iter + 1) % cfg.decay_every == 0 {
            opt.pose.learning_rate *= cfg.decay_factor;
        }

        last_mi = grads.estimate.value;
        run.mi_trace.push(last_mi);
        run.pose_trace.push(pose);
        run.iterations = iter + 1;

        if plateaued(
            &run.mi_trace,
            cfg.warmup_iterations,
            cfg.convergence_window,
            cfg.convergence_threshold,
        ) {
            run.converged = true;
            break;
        }
    }
    let moving = run.iterations.saturating_sub(cfg.warmup_iterations);
    run.pose = average_tail(&run.pose_trace, cfg.average_window.min(moving), &pose);
    run.wall_time_s = clock.elapsed_s();
    Ok(run)
}

/// Chains the DV gradient at each joint sample through sampling and projection.
fn pose_gradient(frames: &[CalibFrame], batch: &Minibatch, joint_y: &[f64], c: usize) -> Vector6<f64> {
    let mut grad_pose = Vector6::zeros();
    for (row, (fi, q, uv)) in batch.rows.iter().enumerate() {
        let frame = &frames[*fi];
        let g_soft = &joint_y[row * c..(row + 1) * c];
        let g_uv = frame.planes.sample_pullback(uv.x, uv.y, g_soft);
        accumulate_point_pullback(q, &frame.intrinsics, &g_uv, &mut grad_pose);
    }
    grad_pose
}

/// Mean of the last `n` poses, taken in the tangent space at `anchor`.
fn average_tail(trace: &[Pose], n: usize, anchor: &Pose) -> Pose {
    if n < 2 {
        return *anchor;
    }
    let inv = anchor.inverse();
    let mut mean = Vector6::zeros();
    for p in &trace[trace.len() - n..] {
        match se3_log(&p.compose(&inv)) {
            Ok(t) => mean += t.0,
            Err(_) => return *anchor,
        }
    }
    se3_exp_unchecked(&Twist(mean / n as f64)).compose(anchor)
}

/// Mean MI over the last window differs from the window before by less than
/// `threshold`. Only checked once two full windows follow the warm-up.
fn plateaued(trace: &[f64], warmup: usize, window: usize, threshold: f64) -> bool {
    let n = trace.len();
    if n < warmup + 2 * window {
        return false;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let recent = mean(&trace[n - window..]);
    let before = mean(&trace[n - 2 * window..n - window]);
    (recent - before).abs() < threshold
}

/// Fixed-pose evaluation protocol for [`mi_landscape`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapeProtocol {
    /// Critic-only training steps per pose.
    pub critic_steps: usize,
    /// Fresh batches averaged for the reported value.
    pub eval_batches: usize,
}

impl Default for LandscapeProtocol {
    fn default() -> Self {
        Self {
            critic_steps: 1000,
            eval_batches: 20,
        }
    }
}

/// Objective and pose gradient at a fixed pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapePoint {
    /// Mean DV estimate over the evaluation batches.
    pub mi: f64,
    /// Mean pose gradient (translation first) over the evaluation batches.
    pub gradient: [f64; 6],
}

/// Trains a fresh critic at `pose` for the protocol's critic steps, then
/// averages the estimate and pose gradient over the evaluation batches.
pub fn landscape_point(
    frames: &[CalibFrame],
    pose: &Pose,
    cfg: &CalibConfig,
    protocol: &LandscapeProtocol,
) -> Result<LandscapePoint> {
    check_inputs(frames, pose, cfg)?;
    let c = frames[0].num_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = StatisticsNetwork::new(2 * c, &cfg.hidden, rng.random())?;
    let mut opt = OptimizerState::new(
        &net,
        cfg.critic_lr,
        cfg.pose_lr,
        cfg.decay_every as u64,
        cfg.decay_factor,
    );
    let sampler = PointSampler::new(frames);
    let mut empty_streak = 0;
    let mut next_batch = |rng: &mut ChaCha8Rng| -> Result<Option<Minibatch>> {
        let batch = draw_minibatch(frames, &sampler, pose, cfg.batch_size, rng);
        if batch.rows.len() < 2 {
            empty_streak += 1;
            if empty_streak >= MAX_EMPTY_ITERATIONS {
                return Err(Error::Diverged("no points in view at this pose".into()));
            }
            return Ok(None);
        }
        empty_streak = 0;
        Ok(Some(batch))
    };
    for _ in 0..protocol.critic_steps {
        if let Some(batch) = next_batch(&mut rng)? {
            let marginal = batch.pairs.shuffled(&mut rng);
            let grads = dv_pullback(&net, &batch.pairs, &marginal)?;
            ascent_step(&mut net, &mut opt, &grads.theta)?;
        }
    }
    let mut mi = 0.0;
    let mut gradient = Vector6::zeros();
    let mut count = 0;
    while count < protocol.eval_batches.max(1) {
        if let Some(batch) = next_batch(&mut rng)? {
            let marginal = batch.pairs.shuffled(&mut rng);
            let grads = dv_pullback(&net, &batch.pairs, &marginal)?;
            mi += grads.estimate.value;
            gradient += pose_gradient(frames, &batch, &grads.joint_y, c);
            count += 1;
        }
    }
    let n = count as f64;
    let gradient = gradient / n;
    Ok(LandscapePoint {
        mi: mi / n,
        gradient: std::array::from_fn(|i| gradient[i]),
    })
}

/// DV estimate at each fixed pose, with a freshly trained critic per pose.
/// Every pose uses the same seed, so equal poses score equally.
pub fn mi_landscape(
    frames: &[CalibFrame],
    poses: &[Pose],
    cfg: &CalibConfig,
    protocol: &LandscapeProtocol,
) -> Result<Vec<f64>> {
    poses
        .iter()
        .map(|pose| landscape_point(frames, pose, cfg, protocol).map(|p| p.mi))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::se3_exp;

    fn tiny_frame(labels: Vec<u8>, image: LabelImage) -> CalibFrame {
        let k = CameraIntrinsics::new(
            20.0,
            20.0,
            image.width() as f64 / 2.0,
            image.height() as f64 / 2.0,
            image.width(),
            image.height(),
        )
        .unwrap();
        let points = (0..labels.len())
            .map(|i| {
                Vector3::new(
                    (i % 7) as f64 * 0.1 - 0.3,
                    (i / 7 % 5) as f64 * 0.1 - 0.2,
                    2.0 + (i % 3) as f64,
                )
            })
            .collect();
        let c = image.num_classes();
        CalibFrame::new(
            PointCloudFrame {
                points,
                labels,
                num_classes: c,
            },
            Arc::new(image),
            k,
        )
        .unwrap()
    }

    #[test]
    fn frame_validation() {
        let img = LabelImage::filled(8, 6, 3, 0).unwrap();
        let k = CameraIntrinsics::new(20.0, 20.0, 4.0, 3.0, 8, 6).unwrap();
        let cloud = PointCloudFrame {
            points: vec![],
            labels: vec![],
            num_classes: 3,
        };
        assert!(CalibFrame::new(cloud, Arc::new(img.clone()), k).is_err());
        let cloud = PointCloudFrame {
            points: vec![Vector3::new(0.0, 0.0, 1.0)],
            labels: vec![0],
            num_classes: 4,
        };
        assert!(CalibFrame::new(cloud, Arc::new(img), k).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(CalibConfig {
            batch_size: 1,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(CalibConfig {
            pose_lr: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        CalibConfig::default().validate().unwrap();
    }

    #[test]
    fn all_points_behind_camera_diverges() {
        let img = LabelImage::filled(16, 12, 2, 1).unwrap();
        let frame = tiny_frame(vec![0; 35], img);
        // Turn the camera around.
        let init = se3_exp(&Twist::from_slice(&[
            0.0,
            0.0,
            0.0,
            0.0,
            std::f64::consts::PI * 0.99,
            0.0,
        ]))
        .unwrap();
        let cfg = CalibConfig {
            batch_size: 16,
            max_iterations: 100,
            ..Default::default()
        };
        assert!(matches!(calibrate(&[frame], &init, &cfg), Err(Error::Diverged(_))));
    }

    #[test]
    fn trace_length_matches_iterations_and_is_deterministic() {
        let labels: Vec<u8> = (0..35).map(|i| (i % 2) as u8).collect();
        let img = LabelImage::new(16, 12, 2, (0..16 * 12).map(|i| ((i % 16) / 8) as u8).collect()).unwrap();
        let frame = tiny_frame(labels, img);
        let cfg = CalibConfig {
            batch_size: 32,
            max_iterations: 60,
            warmup_iterations: 10,
            hidden: vec![16, 16],
            ..Default::default()
        };
        let a = calibrate(std::slice::from_ref(&frame), &Pose::identity(), &cfg).unwrap();
        let b = calibrate(&[frame], &Pose::identity(), &cfg).unwrap();
        assert_eq!(a.mi_trace.len(), a.iterations);
        assert_eq!(a.pose_trace.len(), a.iterations);
        assert_eq!(a.mi_trace, b.mi_trace);
        assert_eq!(a.pose, b.pose);
        assert!(a.pose.is_valid(1e-9));
    }

    #[test]
    fn plateau_detection() {
        let flat = vec![0.5; 500];
        assert!(plateaued(&flat, 0, 200, 1e-4));
        assert!(!plateaued(&flat[..399], 0, 200, 1e-4));
        let rising: Vec<f64> = (0..500).map(|i| i as f64 * 1e-3).collect();
        assert!(!plateaued(&rising, 0, 200, 1e-4));
    }

    #[test]
    fn single_class_landscape_is_flat_zero() {
        let img = LabelImage::filled(16, 12, 3, 2).unwrap();
        let frame = tiny_frame(vec![2; 35], img);
        let cfg = CalibConfig {
            batch_size: 64,
            critic_lr: 1e-3,
            hidden: vec![16, 16],
            ..Default::default()
        };
        let protocol = LandscapeProtocol {
            critic_steps: 50,
            eval_batches: 5,
        };
        let poses = [
            Pose::identity(),
            se3_exp(&Twist::from_slice(&[0.01, 0.0, 0.0, 0.0, 0.02, 0.0])).unwrap(),
        ];
        let values = mi_landscape(&[frame], &poses, &cfg, &protocol).unwrap();
        for v in values {
            assert!(v.abs() < 1e-9, "{v}");
        }
    }
}
