//! Browser bindings: a small synthetic scene whose extrinsic can be nudged,
//! inspected as a projection overlay, scored along one axis, and refined.

use lidarcam::calibrator::{calibrate, CalibConfig, CalibFrame};
use lidarcam::geometry::{se3_exp, se3_log, CameraIntrinsics};
use lidarcam::initializer::{JointHistogram, SphericalConfig};
use lidarcam::synth::{generate, pose_error, GroundTruthBundle, SceneSpec};
use lidarcam::{Pose, Twist};
use wasm_bindgen::prelude::*;

const PALETTE: [[u8; 3]; 10] = [
    [128, 64, 128],
    [70, 130, 180],
    [220, 20, 60],
    [250, 170, 30],
    [107, 142, 35],
    [70, 70, 70],
    [190, 153, 153],
    [0, 0, 142],
    [153, 153, 153],
    [255, 255, 255],
];

fn color(class: u8) -> [u8; 3] {
    PALETTE[class as usize % PALETTE.len()]
}

/// Scene small enough to generate and calibrate interactively.
pub fn demo_spec(seed: u64) -> SceneSpec {
    let camera = CameraIntrinsics::from_fov(320, 180, 90.0).expect("valid camera");
    let base = SceneSpec::default();
    SceneSpec {
        seed,
        camera,
        lidar: SphericalConfig {
            channels: 32,
            ring_points: 400,
            ..base.lidar.with_camera(&camera)
        },
        ..base
    }
}

/// Plug-in MI between LiDAR labels and the labels of the pixels they project onto.
pub fn projection_mi(frames: &[CalibFrame], pose: &Pose) -> f64 {
    let c = frames.first().map_or(1, |f| f.num_classes());
    let mut hist = JointHistogram::new(c, c);
    for f in frames {
        let k = &f.intrinsics;
        for (p, &l) in f.cloud.points.iter().zip(&f.cloud.labels) {
            if let Some(uv) = k.project_camera_point(&pose.transform_point(p)) {
                if k.contains(&uv) {
                    hist.add(l, f.image.get(uv.x.round() as usize, uv.y.round() as usize));
                }
            }
        }
    }
    hist.mutual_information()
}

/// Camera labels (dimmed) with LiDAR points drawn at their projections, as RGBA.
pub fn render_overlay(frame: &CalibFrame, pose: &Pose) -> Vec<u8> {
    let img = &frame.image;
    let (w, h) = (img.width(), img.height());
    let mut rgba = vec![0u8; w * h * 4];
    for y in 0..h {
        for x in 0..w {
            let [r, g, b] = color(img.get(x, y));
            let i = 4 * (y * w + x);
            rgba[i..i + 4].copy_from_slice(&[r / 2, g / 2, b / 2, 255]);
        }
    }
    let k = &frame.intrinsics;
    for (p, &l) in frame.cloud.points.iter().zip(&frame.cloud.labels) {
        if let Some(uv) = k.project_camera_point(&pose.transform_point(p)) {
            if k.contains(&uv) {
                let i = 4 * (uv.y.round() as usize * w + uv.x.round() as usize);
                let [r, g, b] = color(l);
                rgba[i..i + 4].copy_from_slice(&[r, g, b, 255]);
            }
        }
    }
    rgba
}

/// `Twist` from meters and degrees.
fn twist_of(offset: &[f64; 6]) -> Twist {
    let mut t = *offset;
    for v in &mut t[3..] {
        *v = v.to_radians();
    }
    Twist::from_slice(&t)
}

#[wasm_bindgen]
pub struct Demo {
    bundle: GroundTruthBundle,
    /// Displacement of the estimate from ground truth: meters, then degrees.
    offset: [f64; 6],
}

impl Demo {
    pub fn create(seed: u64, frames: usize) -> lidarcam::Result<Demo> {
        Ok(Demo {
            bundle: generate(&demo_spec(seed), frames.max(1))?,
            offset: [0.0; 6],
        })
    }

    pub fn estimate(&self) -> Pose {
        se3_exp(&twist_of(&self.offset))
            .expect("finite offset")
            .compose(&self.bundle.ground_truth)
    }

    pub fn refine_with(&mut self, iterations: usize, seed: u64) -> lidarcam::Result<Vec<f64>> {
        let cfg = CalibConfig {
            max_iterations: iterations,
            batch_size: 512,
            hidden: vec![64, 64],
            warmup_iterations: iterations.min(100),
            critic_lr: 1e-3,
            pose_lr: 2e-3,
            seed,
            ..CalibConfig::default()
        };
        let run = calibrate(&self.bundle.frames, &self.estimate(), &cfg)?;
        let delta = se3_log(&run.pose.compose(&self.bundle.ground_truth.inverse()))?;
        let mut offset = delta.to_array();
        for v in &mut offset[3..] {
            *v = v.to_degrees();
        }
        self.offset = offset;
        Ok(run.mi_trace)
    }

    pub fn frames(&self) -> &[CalibFrame] {
        &self.bundle.frames
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, frames: u32) -> Result<Demo, JsError> {
        Demo::create(seed as u64, frames as usize).map_err(|e| JsError::new(&e.to_string()))
    }

    pub fn width(&self) -> u32 {
        self.bundle.frames[0].image.width() as u32
    }

    pub fn height(&self) -> u32 {
        self.bundle.frames[0].image.height() as u32
    }

    pub fn frame_count(&self) -> u32 {
        self.bundle.frames.len() as u32
    }

    /// Translation in meters, rotation in degrees, relative to ground truth.
    pub fn set_offset(&mut self, tx: f64, ty: f64, tz: f64, rx: f64, ry: f64, rz: f64) {
        self.offset = [tx, ty, tz, rx, ry, rz];
    }

    pub fn offset(&self) -> Vec<f64> {
        self.offset.to_vec()
    }

    /// `[rotation error (deg), translation error (m)]`.
    pub fn error(&self) -> Vec<f64> {
        let (d, m) = pose_error(&self.estimate(), &self.bundle.ground_truth);
        vec![d, m]
    }

    pub fn overlay(&self, frame: u32) -> Vec<u8> {
        let i = (frame as usize).min(self.bundle.frames.len() - 1);
        render_overlay(&self.bundle.frames[i], &self.estimate())
    }

    /// Projection MI while sweeping one offset component (0-2 meters, 3-5
    /// degrees) over `center +- half_range` in `steps` samples.
    pub fn mi_curve(&self, axis: u32, half_range: f64, steps: u32) -> Vec<f64> {
        let axis = (axis as usize).min(5);
        let steps = steps.max(2) as usize;
        (0..steps)
            .map(|s| {
                let mut o = self.offset;
                o[axis] += -half_range + 2.0 * half_range * s as f64 / (steps - 1) as f64;
                let pose = se3_exp(&twist_of(&o))
                    .expect("finite offset")
                    .compose(&self.bundle.ground_truth);
                projection_mi(&self.bundle.frames, &pose)
            })
            .collect()
    }

    /// Runs the MI-maximizing optimizer from the current estimate and adopts
    /// its result; returns the MI trace.
    pub fn refine(&mut self, iterations: u32, seed: u32) -> Result<Vec<f64>, JsError> {
        self.refine_with(iterations as usize, seed as u64)
            .map_err(|e| JsError::new(&e.to_string()))
    }
}
