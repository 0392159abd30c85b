//! Targetless LiDAR-camera extrinsic calibration from semantic labels.
//!
//! The calibration maximizes a neural (Donsker-Varadhan) estimate of the
//! mutual information between the class of each LiDAR point and the class of
//! the image pixel it projects onto. Every stage between the pose and the
//! estimate is differentiable:
//!
//! - [`geometry`]: SE(3) exponential/log maps and pinhole projection with
//!   analytic pose derivatives.
//! - [`sampling`]: one-hot label planes and bilinear sampling at continuous
//!   pixel coordinates.
//! - [`mine`]: the statistics network (critic), the DV bound and its
//!   reverse-mode gradients, and the adaptive-moment ascent rule.
//! - [`calibrator`]: the joint critic/pose ascent loop.
//! - [`initializer`]: a semantic initial guess from spherical label images,
//!   2D mutual-information registration and PnP, aggregated over scans with
//!   modified z-scores.
//! - [`synth`]: a procedural ray-cast scene generator with ground truth.
//! - [`io`] and [`report`]: on-disk formats and run reports.

pub mod calibrator;
pub mod error;
pub mod geometry;
pub mod initializer;
pub mod io;
pub mod mine;
pub mod report;
pub mod sampling;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, Pose, ProjectedPoints, Twist};
pub use sampling::{LabelImage, LabelPlanes, SoftLabelBatch};
