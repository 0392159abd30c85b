//! Run reports: JSON summaries and CSV traces.
//!
//! Reports hold only deterministic quantities so that reruns with the same
//! seed produce identical files. Wall-clock time goes to a separate timing
//! file.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibrator::{CalibConfig, CalibrationRun};
use crate::error::Result;
use crate::geometry::Pose;
use crate::io::{write_json, PoseJson};
use crate::synth::pose_error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseErrorJson {
    pub rot_err_deg: f64,
    pub trans_err_m: f64,
}

impl PoseErrorJson {
    pub fn new(est: &Pose, gt: &Pose) -> Self {
        let (rot_err_deg, trans_err_m) = pose_error(est, gt);
        Self {
            rot_err_deg,
            trans_err_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub pose: PoseJson,
    pub initial_pose: PoseJson,
    pub iterations: usize,
    pub converged: bool,
    pub final_mi: Option<f64>,
    pub frames: usize,
    pub config: CalibConfig,
    pub initial_error: Option<PoseErrorJson>,
    pub error: Option<PoseErrorJson>,
}

impl CalibrationReport {
    pub fn new(run: &CalibrationRun, init: &Pose, cfg: &CalibConfig, frames: usize, gt: Option<&Pose>) -> Self {
        Self {
            pose: PoseJson::from_pose(&run.pose),
            initial_pose: PoseJson::from_pose(init),
            iterations: run.iterations,
            converged: run.converged,
            final_mi: run.mi_trace.last().copied(),
            frames,
            config: cfg.clone(),
            initial_error: gt.map(|g| PoseErrorJson::new(init, g)),
            error: gt.map(|g| PoseErrorJson::new(&run.pose, g)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_time_s: f64,
}

/// `iteration,mi` plus `rot_err_deg,trans_err_m` when ground truth is given.
pub fn trace_csv(run: &CalibrationRun, gt: Option<&Pose>) -> String {
    let mut out = String::from("iteration,mi");
    if gt.is_some() {
        out.push_str(",rot_err_deg,trans_err_m");
    }
    out.push('\n');
    for (i, mi) in run.mi_trace.iter().enumerate() {
        write!(out, "{},{}", i + 1, mi).unwrap();
        if let Some(g) = gt {
            let (r, t) = pose_error(&run.pose_trace[i], g);
            write!(out, ",{r},{t}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Writes `report.json`, `trace.csv` and `timing.json` into `dir`.
pub fn write_calibration_outputs(
    dir: &Path,
    run: &CalibrationRun,
    init: &Pose,
    cfg: &CalibConfig,
    frames: usize,
    gt: Option<&Pose>,
) -> Result<CalibrationReport> {
    std::fs::create_dir_all(dir)?;
    let report = CalibrationReport::new(run, init, cfg, frames, gt);
    write_json(&dir.join("report.json"), &report)?;
    std::fs::write(dir.join("trace.csv"), trace_csv(run, gt))?;
    write_json(
        &dir.join("timing.json"),
        &Timing {
            wall_time_s: run.wall_time_s,
        },
    )?;
    Ok(report)
}

/// One trial of an evaluation sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub trial: usize,
    pub frames: usize,
    pub noise: f64,
    pub rot_err_deg: f64,
    pub trans_err_m: f64,
    pub wall_s: f64,
}

pub fn eval_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from("trial,frames,noise,rot_err_deg,trans_err_m,wall_s\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{:.3}",
            r.trial, r.frames, r.noise, r.rot_err_deg, r.trans_err_m, r.wall_s
        )
        .unwrap();
    }
    out
}
