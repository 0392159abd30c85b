//! Semantic initial calibration.
//!
//! The LiDAR scan is treated as a low-resolution panoramic camera: its labels
//! are binned into a spherical image, the camera label image is resized to the
//! same angular resolution, and the two are registered by an exhaustive
//! integer-translation search maximizing discrete mutual information. Bins
//! whose classes agree after registration give 3D-2D correspondences for a
//! PnP solve. Per-scan results are combined with modified z-scores.

use nalgebra::{DMatrix, Matrix3, Matrix6, Vector2, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibrator::{CalibFrame, PointCloudFrame};
use crate::error::{Error, Result};
use crate::geometry::{hat, nearest_rotation, se3_exp, se3_exp_unchecked, se3_log, CameraIntrinsics, Pose, Twist};
use crate::sampling::LabelImage;

/// Spherical binning of a LiDAR scan and the camera's angular coverage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalConfig {
    pub lidar_fov_h_deg: f64,
    pub lidar_fov_v_deg: f64,
    /// Rows (H^L).
    pub channels: usize,
    /// Columns (W^L).
    pub ring_points: usize,
    pub camera_fov_h_deg: f64,
    pub camera_fov_v_deg: f64,
}

impl SphericalConfig {
    pub fn validate(&self) -> Result<()> {
        let fov_ok = |f: f64| f > 0.0 && f <= 360.0;
        if !(fov_ok(self.lidar_fov_h_deg)
            && fov_ok(self.lidar_fov_v_deg)
            && fov_ok(self.camera_fov_h_deg)
            && fov_ok(self.camera_fov_v_deg))
        {
            return Err(Error::InvalidConfig("fields of view must lie in (0, 360]".into()));
        }
        if self.lidar_fov_v_deg > 180.0 {
            return Err(Error::InvalidConfig(
                "vertical LiDAR field of view exceeds 180 degrees".into(),
            ));
        }
        if self.channels == 0 || self.ring_points == 0 {
            return Err(Error::InvalidConfig(
                "spherical image must have rows and columns".into(),
            ));
        }
        Ok(())
    }

    /// Takes the camera fields of view from its intrinsics.
    pub fn with_camera(mut self, k: &CameraIntrinsics) -> Self {
        self.camera_fov_h_deg = k.horizontal_fov_deg();
        self.camera_fov_v_deg = k.vertical_fov_deg();
        self
    }

    fn full_circle(&self) -> bool {
        (self.lidar_fov_h_deg - 360.0).abs() < 1e-9
    }

    /// Elevation (radians) of a row's center; row 0 is the highest.
    pub fn row_center_elevation(&self, row: usize) -> f64 {
        let fov = self.lidar_fov_v_deg.to_radians();
        fov / 2.0 - (row as f64 + 0.5) * fov / self.channels as f64
    }

    /// Azimuth (radians) of a column's center; the center column looks along
    /// `+x` and columns increase to the right (towards `-y`).
    pub fn column_center_azimuth(&self, col: usize) -> f64 {
        let fov = self.lidar_fov_h_deg.to_radians();
        fov / 2.0 - (col as f64 + 0.5) * fov / self.ring_points as f64
    }

    /// `(row, col)` bin of a direction, or `None` outside the field of view.
    pub fn bin(&self, p: &Vector3<f64>) -> Option<(usize, usize)> {
        let r = p.norm();
        if r == 0.0 {
            return None;
        }
        let az = p.y.atan2(p.x);
        let el = (p.z / r).clamp(-1.0, 1.0).asin();
        let fov_h = self.lidar_fov_h_deg.to_radians();
        let fov_v = self.lidar_fov_v_deg.to_radians();
        if el.abs() > fov_v / 2.0 {
            return None;
        }
        let row = (((fov_v / 2.0 - el) / fov_v * self.channels as f64).floor() as usize).min(self.channels - 1);
        let col = if self.full_circle() {
            let c = ((fov_h / 2.0 - az) / fov_h * self.ring_points as f64).floor() as i64;
            c.rem_euclid(self.ring_points as i64) as usize
        } else {
            if az.abs() > fov_h / 2.0 {
                return None;
            }
            (((fov_h / 2.0 - az) / fov_h * self.ring_points as f64).floor() as usize).min(self.ring_points - 1)
        };
        Some((row, col))
    }
}

/// LiDAR labels binned by azimuth and elevation.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalLabelImage {
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    /// Row-major class per bin; `num_classes` marks an empty bin.
    pub labels: Vec<u8>,
    /// Source point index per bin, `-1` when empty.
    pub index: Vec<i64>,
    /// Range (meters) of the kept point, `inf` when empty.
    pub range: Vec<f64>,
    /// Zero-norm points that could not be binned.
    pub skipped: usize,
}

impl SphericalLabelImage {
    pub fn sentinel(&self) -> u8 {
        self.num_classes as u8
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.width + col]
    }

    pub fn labeled_count(&self) -> usize {
        self.index.iter().filter(|&&i| i >= 0).count()
    }

    /// Sub-image with `rows x cols` starting at `(row0, col0)`, wrapping in azimuth.
    /// Empty bins become `fill`.
    pub fn crop(&self, row0: usize, col0: usize, rows: usize, cols: usize, fill: u8) -> Result<LabelImage> {
        if row0 + rows > self.height || cols > self.width {
            return Err(Error::InvalidArgument("crop exceeds the spherical image".into()));
        }
        let mut labels = Vec::with_capacity(rows * cols);
        for r in row0..row0 + rows {
            for c in 0..cols {
                let l = self.get(r, (col0 + c) % self.width);
                labels.push(if l == self.sentinel() { fill } else { l });
            }
        }
        LabelImage::new(cols, rows, self.num_classes, labels)
    }
}

/// Bins every point; on collisions the nearest point wins.
pub fn spherical_project(cloud: &PointCloudFrame, cfg: &SphericalConfig) -> Result<SphericalLabelImage> {
    cfg.validate()?;
    cloud.validate()?;
    if cloud.points.is_empty() {
        return Err(Error::InvalidArgument("empty point cloud".into()));
    }
    let n = cfg.channels * cfg.ring_points;
    let mut img = SphericalLabelImage {
        height: cfg.channels,
        width: cfg.ring_points,
        num_classes: cloud.num_classes,
        labels: vec![cloud.num_classes as u8; n],
        index: vec![-1; n],
        range: vec![f64::INFINITY; n],
        skipped: 0,
    };
    for (i, (p, &l)) in cloud.points.iter().zip(&cloud.labels).enumerate() {
        let r = p.norm();
        if r == 0.0 {
            img.skipped += 1;
            continue;
        }
        if let Some((row, col)) = cfg.bin(p) {
            let k = row * cfg.ring_points + col;
            if r < img.range[k] {
                img.range[k] = r;
                img.labels[k] = l;
                img.index[k] = i as i64;
            }
        }
    }
    Ok(img)
}

/// Camera labels resized (nearest neighbor) to the LiDAR's angular resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoomedImage {
    pub image: LabelImage,
    pub source_width: usize,
    pub source_height: usize,
}

impl ZoomedImage {
    /// Source column/row sampled for zoomed pixel `(x, y)`.
    pub fn source_pixel(&self, x: usize, y: usize) -> (usize, usize) {
        nearest_source(
            x,
            y,
            self.image.width(),
            self.image.height(),
            self.source_width,
            self.source_height,
        )
    }

    /// Center (continuous pixel coordinates) of the source block that zoomed
    /// pixel `(x, y)` covers.
    pub fn dezoom(&self, x: usize, y: usize) -> Vector2<f64> {
        let sx = self.source_width as f64 / self.image.width() as f64;
        let sy = self.source_height as f64 / self.image.height() as f64;
        Vector2::new((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5)
    }
}

fn nearest_source(x: usize, y: usize, w: usize, h: usize, sw: usize, sh: usize) -> (usize, usize) {
    let sx = (((x as f64 + 0.5) * sw as f64 / w as f64).floor() as usize).min(sw - 1);
    let sy = (((y as f64 + 0.5) * sh as f64 / h as f64).floor() as usize).min(sh - 1);
    (sx, sy)
}

/// Zoomed size `(W_z, H_z)`: width follows the horizontal FoV ratio, height the vertical.
pub fn zoom_size(cfg: &SphericalConfig) -> (usize, usize) {
    let w = (cfg.ring_points as f64 * cfg.camera_fov_h_deg / cfg.lidar_fov_h_deg).round() as usize;
    let h = (cfg.channels as f64 * cfg.camera_fov_v_deg / cfg.lidar_fov_v_deg).round() as usize;
    (w, h)
}

pub fn zoom_label_image(img: &LabelImage, cfg: &SphericalConfig) -> Result<ZoomedImage> {
    cfg.validate()?;
    let (w, h) = zoom_size(cfg);
    zoom_to(img, w, h)
}

/// Nearest-neighbor resize to exactly `width x height`.
pub fn zoom_to(img: &LabelImage, width: usize, height: usize) -> Result<ZoomedImage> {
    if width < 2 || height < 2 {
        return Err(Error::InvalidConfig(format!(
            "zoomed size {width}x{height} is below 2x2"
        )));
    }
    let mut labels = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (sx, sy) = nearest_source(x, y, width, height, img.width(), img.height());
            labels.push(img.get(sx, sy));
        }
    }
    Ok(ZoomedImage {
        image: LabelImage::new(width, height, img.num_classes(), labels)?,
        source_width: img.width(),
        source_height: img.height(),
    })
}

/// Class co-occurrence counts. Labels at or above a side's class count are ignored.
#[derive(Debug, Clone)]
pub struct JointHistogram {
    classes_a: usize,
    classes_b: usize,
    counts: Vec<u64>,
}

impl JointHistogram {
    pub fn new(classes_a: usize, classes_b: usize) -> Self {
        Self {
            classes_a,
            classes_b,
            counts: vec![0; classes_a * classes_b],
        }
    }

    #[inline]
    pub fn add(&mut self, a: u8, b: u8) {
        let (a, b) = (a as usize, b as usize);
        if a < self.classes_a && b < self.classes_b {
            self.counts[a * self.classes_b + b] += 1;
        }
    }

    pub fn clear(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Plug-in mutual information (nats).
    pub fn mutual_information(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let mut row = vec![0u64; self.classes_a];
        let mut col = vec![0u64; self.classes_b];
        for a in 0..self.classes_a {
            for b in 0..self.classes_b {
                let n = self.counts[a * self.classes_b + b];
                row[a] += n;
                col[b] += n;
            }
        }
        let n = total as f64;
        let mut mi = 0.0;
        for a in 0..self.classes_a {
            for b in 0..self.classes_b {
                let nab = self.counts[a * self.classes_b + b];
                if nab > 0 {
                    let ratio = (nab as f64 * n) / (row[a] as f64 * col[b] as f64);
                    mi += nab as f64 / n * ratio.ln();
                }
            }
        }
        mi
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Plug-in MI between two equal-size label images over `region` (whole image if `None`).
pub fn discrete_mi(a: &LabelImage, b: &LabelImage, region: Option<Region>) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::InvalidArgument("images differ in size".into()));
    }
    let r = region.unwrap_or(Region {
        x: 0,
        y: 0,
        width: a.width(),
        height: a.height(),
    });
    if r.width == 0 || r.height == 0 || r.x + r.width > a.width() || r.y + r.height > a.height() {
        return Err(Error::InvalidArgument("empty or out-of-bounds overlap".into()));
    }
    let mut hist = JointHistogram::new(a.num_classes(), b.num_classes());
    for y in r.y..r.y + r.height {
        for x in r.x..r.x + r.width {
            hist.add(a.get(x, y), b.get(x, y));
        }
    }
    if hist.total() == 0 {
        return Err(Error::InvalidArgument("overlap has no labeled pixels".into()));
    }
    Ok(hist.mutual_information())
}

/// MI score for every searched offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMap {
    pub du_min: i64,
    pub dv_min: i64,
    pub du_count: usize,
    pub dv_count: usize,
    /// Row-major by `dv`; `None` where the overlap rule excluded the offset.
    pub scores: Vec<Option<f64>>,
}

impl ScoreMap {
    pub fn get(&self, du: i64, dv: i64) -> Option<f64> {
        let i = usize::try_from(du - self.du_min).ok()?;
        let j = usize::try_from(dv - self.dv_min).ok()?;
        if i >= self.du_count || j >= self.dv_count {
            return None;
        }
        self.scores[j * self.du_count + i]
    }
}

/// Best integer offset of the moving image relative to its centered placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationResult {
    /// Columns (cyclic, in `[-W/2, W/2)`) and rows of displacement from the
    /// placement that centers the moving image on the fixed one.
    pub offset: (i64, i64),
    pub score: f64,
    pub map: ScoreMap,
    pub fixed_size: (usize, usize),
    pub moving_size: (usize, usize),
}

impl RegistrationResult {
    /// Fixed-image `(row, col)` under moving pixel `(x, y)`, if inside the fixed rows.
    pub fn fixed_bin(&self, x: usize, y: usize) -> Option<(usize, usize)> {
        let (fw, fh) = self.fixed_size;
        let (mw, mh) = self.moving_size;
        let (col0, row0) = placement_origin(fw, fh, mw, mh, self.offset);
        let row = row0 + y as i64;
        if row < 0 || row >= fh as i64 {
            return None;
        }
        let col = (col0 + x as i64).rem_euclid(fw as i64) as usize;
        Some((row as usize, col))
    }
}

/// Top-left of the moving image in fixed coordinates for an offset.
fn placement_origin(fw: usize, fh: usize, mw: usize, mh: usize, (du, dv): (i64, i64)) -> (i64, i64) {
    let base_col = (fw as i64 - mw as i64).div_euclid(2);
    let base_row = (fh as i64 - mh as i64).div_euclid(2);
    (base_col + du, base_row + dv)
}

/// Exhaustive search over all cyclic column offsets and `+-H/2` row offsets.
///
/// An offset is scored only if the geometric row overlap covers at least half
/// of `min(H_fixed, H_moving)`. Empty fixed bins count as one extra fixed
/// category, so "no return" can pair with sky. Ties go to the smallest
/// `|(du, dv)|`, then lexicographic order.
pub fn register_2d(fixed: &SphericalLabelImage, moving: &LabelImage) -> Result<RegistrationResult> {
    let (fw, fh) = (fixed.width, fixed.height);
    let (mw, mh) = (moving.width(), moving.height());
    if mw > fw {
        return Err(Error::InvalidArgument(format!(
            "moving width {mw} exceeds fixed width {fw}"
        )));
    }
    let du_min = -(fw as i64) / 2;
    let du_count = fw;
    let half_rows = (fh / 2) as i64;
    let dv_min = -half_rows;
    let dv_count = (2 * half_rows + 1) as usize;
    let min_rows = fh.min(mh);

    // Each fixed row twice so the cyclic column index never wraps.
    let doubled: Vec<Vec<u8>> = (0..fh)
        .map(|r| {
            let row = &fixed.labels[r * fw..(r + 1) * fw];
            row.iter().chain(row).copied().collect()
        })
        .collect();

    let mut hist = JointHistogram::new(fixed.num_classes + 1, moving.num_classes());
    let mut scores = vec![None; du_count * dv_count];
    for j in 0..dv_count {
        let dv = dv_min + j as i64;
        for i in 0..du_count {
            let du = du_min + i as i64;
            let (col0, row0) = placement_origin(fw, fh, mw, mh, (du, dv));
            let y_start = (-row0).max(0) as usize;
            let y_end = ((fh as i64 - row0).min(mh as i64)).max(0) as usize;
            if y_end <= y_start || 2 * (y_end - y_start) < min_rows {
                continue;
            }
            let col = col0.rem_euclid(fw as i64) as usize;
            hist.clear();
            for y in y_start..y_end {
                let frow = &doubled[(row0 + y as i64) as usize][col..col + mw];
                let mrow = &moving.labels()[y * mw..(y + 1) * mw];
                for (a, b) in frow.iter().zip(mrow) {
                    hist.add(*a, *b);
                }
            }
            if hist.total() > 0 {
                scores[j * du_count + i] = Some(hist.mutual_information());
            }
        }
    }

    let mut best: Option<((i64, i64), f64)> = None;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for j in 0..dv_count {
        for i in 0..du_count {
            let Some(s) = scores[j * du_count + i] else { continue };
            lo = lo.min(s);
            hi = hi.max(s);
            let off = (du_min + i as i64, dv_min + j as i64);
            let better = match best {
                None => true,
                Some((b_off, b_s)) => {
                    if s != b_s {
                        s > b_s
                    } else {
                        let n = off.0 * off.0 + off.1 * off.1;
                        let bn = b_off.0 * b_off.0 + b_off.1 * b_off.1;
                        n < bn || (n == bn && off < b_off)
                    }
                }
            };
            if better {
                best = Some((off, s));
            }
        }
    }
    let Some((offset, score)) = best else {
        return Err(Error::DegenerateScene("no offset satisfies the overlap rule".into()));
    };
    if hi - lo < 1e-9 {
        return Err(Error::DegenerateScene(format!(
            "flat registration score map (max {hi:.3e})"
        )));
    }
    Ok(RegistrationResult {
        offset,
        score,
        map: ScoreMap {
            du_min,
            dv_min,
            du_count,
            dv_count,
            scores,
        },
        fixed_size: (fw, fh),
        moving_size: (mw, mh),
    })
}

/// 3D-2D correspondences recovered from a registration.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondences {
    pub points: Vec<Vector3<f64>>,
    pub pixels: Vec<Vector2<f64>>,
    pub classes: Vec<u8>,
}

/// Samples up to `n` class-agreeing bins from the registered overlap and maps
/// them back to source points and full-resolution pixel centers.
pub fn sample_correspondences(
    fixed: &SphericalLabelImage,
    cloud: &PointCloudFrame,
    moving: &ZoomedImage,
    reg: &RegistrationResult,
    n: usize,
    seed: u64,
) -> Result<Correspondences> {
    let img = &moving.image;
    let mut candidates = Vec::new();
    for y in 0..img.height() {
        for x in 0..img.width() {
            if let Some((row, col)) = reg.fixed_bin(x, y) {
                let k = row * fixed.width + col;
                if fixed.index[k] >= 0 && fixed.labels[k] == img.get(x, y) {
                    candidates.push((x, y, k));
                }
            }
        }
    }
    if candidates.len() < 6 {
        return Err(Error::InsufficientCorrespondences(candidates.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = n.min(candidates.len());
    // Partial Fisher-Yates.
    for i in 0..take {
        let j = rng.random_range(i..candidates.len());
        candidates.swap(i, j);
    }
    let mut out = Correspondences {
        points: Vec::with_capacity(take),
        pixels: Vec::with_capacity(take),
        classes: Vec::with_capacity(take),
    };
    for &(x, y, k) in &candidates[..take] {
        let idx = fixed.index[k] as usize;
        let p = cloud
            .points
            .get(idx)
            .ok_or_else(|| Error::InvalidArgument("index map does not match the cloud".into()))?;
        out.points.push(*p);
        out.pixels.push(moving.dezoom(x, y));
        out.classes.push(fixed.labels[k]);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PnpOptions {
    pub ransac_iterations: usize,
    pub sample_size: usize,
    pub inlier_threshold_px: f64,
    pub seed: u64,
}

impl Default for PnpOptions {
    fn default() -> Self {
        Self {
            ransac_iterations: 100,
            sample_size: 6,
            inlier_threshold_px: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnpResult {
    pub pose: Pose,
    pub inliers: Vec<bool>,
    /// RMS reprojection error (pixels) over the inliers.
    pub rms_px: f64,
}

impl PnpResult {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|b| **b).count()
    }
}

fn reprojection_error(pose: &Pose, k: &CameraIntrinsics, p: &Vector3<f64>, uv: &Vector2<f64>) -> f64 {
    match k.project_camera_point(&pose.transform_point(p)) {
        Some(proj) => (proj - uv).norm(),
        None => f64::INFINITY,
    }
}

fn check_non_coplanar(points: &[Vector3<f64>]) -> Result<()> {
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigenvalues();
    let max = eig.max();
    if !(max > 0.0) || eig.min() <= 1e-10 * max {
        return Err(Error::DegenerateGeometry("points are coplanar or collinear".into()));
    }
    Ok(())
}

/// Normalized direct linear transform followed by projection onto SO(3).
pub fn dlt_pose(points: &[Vector3<f64>], pixels: &[Vector2<f64>], k: &CameraIntrinsics) -> Result<Pose> {
    if points.len() != pixels.len() {
        return Err(Error::InvalidArgument("point and pixel counts differ".into()));
    }
    if points.len() < 6 {
        return Err(Error::InvalidArgument(format!(
            "PnP needs at least 6 points, got {}",
            points.len()
        )));
    }
    check_non_coplanar(points)?;
    let n = points.len();
    let centroid = points.iter().sum::<Vector3<f64>>() / n as f64;
    let mean_dist = points.iter().map(|p| (p - centroid).norm()).sum::<f64>() / n as f64;
    let s = 3f64.sqrt() / mean_dist;

    let mut a = DMatrix::zeros(2 * n, 12);
    for (i, (p, uv)) in points.iter().zip(pixels).enumerate() {
        let q = (p - centroid) * s;
        let x = (uv.x - k.cx) / k.fx;
        let y = (uv.y - k.cy) / k.fy;
        let hom = [q.x, q.y, q.z, 1.0];
        for j in 0..4 {
            a[(2 * i, j)] = hom[j];
            a[(2 * i, 8 + j)] = -x * hom[j];
            a[(2 * i + 1, 4 + j)] = hom[j];
            a[(2 * i + 1, 8 + j)] = -y * hom[j];
        }
    }
    // Null vector of A from the 12x12 normal matrix.
    let ata = a.transpose() * &a;
    let eig = ata.symmetric_eigen();
    let mut order: Vec<usize> = (0..12).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let largest = eig.eigenvalues[order[11]];
    if eig.eigenvalues[order[1]] <= 1e-12 * largest {
        return Err(Error::DegenerateGeometry(
            "DLT system has a multi-dimensional null space".into(),
        ));
    }
    let h = eig.eigenvectors.column(order[0]);
    let m_rot = Matrix3::new(h[0], h[1], h[2], h[4], h[5], h[6], h[8], h[9], h[10]);
    let m_t = Vector3::new(h[3], h[7], h[11]);
    // Undo the 3D normalization: [s*A | b - s*A*c].
    let mut rot = m_rot * s;
    let mut trans = m_t - rot * centroid;
    if rot.determinant() < 0.0 {
        rot = -rot;
        trans = -trans;
    }
    let svd = rot.svd(false, false);
    let scale = svd.singular_values.mean();
    if !(scale > 0.0) {
        return Err(Error::DegenerateGeometry("DLT solution has zero scale".into()));
    }
    let rotation = nearest_rotation(&rot)?;
    let pose = Pose {
        rotation,
        translation: trans / scale,
    };
    let in_front = points.iter().filter(|p| pose.transform_point(p).z > 0.0).count();
    if 2 * in_front < n {
        return Err(Error::DegenerateGeometry(
            "DLT places the points behind the camera".into(),
        ));
    }
    Ok(pose)
}

/// Damped Gauss-Newton (Levenberg-Marquardt) on the reprojection error.
pub fn refine_pose(
    points: &[Vector3<f64>],
    pixels: &[Vector2<f64>],
    k: &CameraIntrinsics,
    init: &Pose,
    max_iterations: usize,
) -> Pose {
    let cost = |pose: &Pose| -> f64 {
        points
            .iter()
            .zip(pixels)
            .map(|(p, uv)| {
                let e = reprojection_error(pose, k, p, uv);
                e * e
            })
            .sum()
    };
    let mut pose = *init;
    let mut current = cost(&pose);
    let mut lambda = 1e-3;
    for _ in 0..max_iterations {
        let mut jtj = Matrix6::zeros();
        let mut jtr = Vector6::zeros();
        for (p, uv) in points.iter().zip(pixels) {
            let q = pose.transform_point(p);
            if q.z <= 1e-9 {
                continue;
            }
            let inv_z = 1.0 / q.z;
            let proj = Vector2::new(k.fx * q.x * inv_z + k.cx, k.fy * q.y * inv_z + k.cy);
            let r = proj - uv;
            let dproj = nalgebra::Matrix2x3::new(
                k.fx * inv_z,
                0.0,
                -k.fx * q.x * inv_z * inv_z,
                0.0,
                k.fy * inv_z,
                -k.fy * q.y * inv_z * inv_z,
            );
            let mut dq = nalgebra::Matrix3x6::zeros();
            dq.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
            dq.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-hat(&q)));
            let j = dproj * dq;
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }
        let mut improved = false;
        while lambda < 1e10 {
            let mut damped = jtj;
            for i in 0..6 {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = se3_exp_unchecked(&Twist(step)).compose(&pose);
            let c = cost(&candidate);
            if c < current {
                let small = step.norm() < 1e-14 || (current - c) < 1e-15 * current.max(1e-300);
                pose = candidate;
                current = c;
                lambda = (lambda * 0.1).max(1e-12);
                improved = !small;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    pose
}

fn fit(points: &[Vector3<f64>], pixels: &[Vector2<f64>], k: &CameraIntrinsics, iterations: usize) -> Result<Pose> {
    let init = dlt_pose(points, pixels, k)?;
    Ok(refine_pose(points, pixels, k, &init, iterations))
}

/// Random-sample consensus around DLT + Gauss-Newton; the returned pose is
/// refit on the best consensus set and its inliers are re-evaluated.
pub fn pnp_solve(
    points: &[Vector3<f64>],
    pixels: &[Vector2<f64>],
    k: &CameraIntrinsics,
    opts: &PnpOptions,
) -> Result<PnpResult> {
    if points.len() != pixels.len() {
        return Err(Error::InvalidArgument("point and pixel counts differ".into()));
    }
    if points.len() < 6 {
        return Err(Error::InvalidArgument(format!(
            "PnP needs at least 6 points, got {}",
            points.len()
        )));
    }
    check_non_coplanar(points)?;
    let n = points.len();
    let sample_size = opts.sample_size.clamp(6, n);
    let inliers_of = |pose: &Pose| -> (Vec<bool>, f64) {
        let mut mask = vec![false; n];
        let mut err = 0.0;
        for i in 0..n {
            let e = reprojection_error(pose, k, &points[i], &pixels[i]);
            if e < opts.inlier_threshold_px {
                mask[i] = true;
                err += e * e;
            }
        }
        (mask, err)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(Vec<bool>, usize, f64)> = None;
    let iterations = if sample_size == n {
        1
    } else {
        opts.ransac_iterations.max(1)
    };
    let mut idx: Vec<usize> = (0..n).collect();
    for _ in 0..iterations {
        for i in 0..sample_size {
            let j = rng.random_range(i..n);
            idx.swap(i, j);
        }
        let sp: Vec<_> = idx[..sample_size].iter().map(|&i| points[i]).collect();
        let sx: Vec<_> = idx[..sample_size].iter().map(|&i| pixels[i]).collect();
        let Ok(pose) = fit(&sp, &sx, k, 10) else { continue };
        let (mask, err) = inliers_of(&pose);
        let count = mask.iter().filter(|b| **b).count();
        let better = match &best {
            None => true,
            Some((_, c, e)) => count > *c || (count == *c && err < *e),
        };
        if better {
            best = Some((mask, count, err));
        }
    }
    let Some((mut mask, count, _)) = best else {
        return Err(Error::DegenerateGeometry("no sample produced a pose".into()));
    };
    if count < 6 {
        return Err(Error::DegenerateGeometry(format!(
            "largest consensus set has {count} points"
        )));
    }
    let mut pose = Pose::identity();
    for _ in 0..3 {
        let ip: Vec<_> = (0..n).filter(|&i| mask[i]).map(|i| points[i]).collect();
        let ix: Vec<_> = (0..n).filter(|&i| mask[i]).map(|i| pixels[i]).collect();
        pose = fit(&ip, &ix, k, 100)?;
        let (next, _) = inliers_of(&pose);
        if next == mask || next.iter().filter(|b| **b).count() < 6 {
            break;
        }
        mask = next;
    }
    let (mask, err) = inliers_of(&pose);
    let count = mask.iter().filter(|b| **b).count();
    if count < 6 {
        return Err(Error::DegenerateGeometry(format!("refit keeps only {count} inliers")));
    }
    Ok(PnpResult {
        pose,
        inliers: mask,
        rms_px: (err / count as f64).sqrt(),
    })
}

/// Scale factor relating the MAD to a normal standard deviation.
pub const Z_SCORE_FACTOR: f64 = 0.6745;
/// Absolute modified z-score above which a value is an outlier.
pub const OUTLIER_Z: f64 = 3.5;
/// Initialization fails when more than this fraction of scans are outliers.
pub const MAX_OUTLIER_FRACTION: f64 = 0.6;

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// `M_i = 0.6745 (x_i - median) / MAD`. A zero MAD is replaced by 1e-12;
/// all-equal input scores zero everywhere.
pub fn modified_z_scores(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "modified z-scores need at least 3 values, got {}",
            xs.len()
        )));
    }
    if !xs.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("z-score input".into()));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let med = median(&sorted);
    let mut dev: Vec<f64> = xs.iter().map(|x| (x - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let mut mad = median(&dev);
    if mad == 0.0 {
        if xs.iter().all(|&x| x == xs[0]) {
            return Ok(vec![0.0; xs.len()]);
        }
        mad = 1e-12;
    }
    Ok(xs.iter().map(|x| Z_SCORE_FACTOR * (x - med) / mad).collect())
}

/// Robust combination of per-scan initial poses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitAggregate {
    pub twists: Vec<[f64; 6]>,
    /// Per scan, per twist component.
    pub z_scores: Vec<[f64; 6]>,
    pub inliers: Vec<bool>,
    pub outlier_fraction: f64,
    #[serde(with = "crate::io::opt_pose_serde")]
    pub pose: Option<Pose>,
    pub failed: bool,
}

/// Flags a pose as an outlier if any twist component has `|M| > 3.5`; fails if
/// more than 60% are outliers, else averages the inlier twists.
pub fn aggregate_inits(poses: &[Pose]) -> Result<InitAggregate> {
    if poses.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "aggregation needs at least 3 poses, got {}",
            poses.len()
        )));
    }
    let twists: Vec<[f64; 6]> = poses
        .iter()
        .map(|p| se3_log(p).map(|t| t.to_array()))
        .collect::<Result<_>>()?;
    let mut z_scores = vec![[0.0; 6]; poses.len()];
    for c in 0..6 {
        let column: Vec<f64> = twists.iter().map(|t| t[c]).collect();
        for (i, z) in modified_z_scores(&column)?.into_iter().enumerate() {
            z_scores[i][c] = z;
        }
    }
    let inliers: Vec<bool> = z_scores
        .iter()
        .map(|z| z.iter().all(|m| m.abs() <= OUTLIER_Z))
        .collect();
    let outliers = inliers.iter().filter(|b| !**b).count();
    let outlier_fraction = outliers as f64 / poses.len() as f64;
    let failed = outlier_fraction > MAX_OUTLIER_FRACTION;
    let pose = if failed {
        None
    } else {
        let mut mean = Vector6::zeros();
        let kept: Vec<&[f64; 6]> = twists
            .iter()
            .zip(&inliers)
            .filter(|(_, k)| **k)
            .map(|(t, _)| t)
            .collect();
        for t in &kept {
            mean += Vector6::from_row_slice(&t[..]);
        }
        mean /= kept.len() as f64;
        Some(se3_exp(&Twist(mean))?)
    };
    Ok(InitAggregate {
        twists,
        z_scores,
        inliers,
        outlier_fraction,
        pose,
        failed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitOptions {
    pub correspondences: usize,
    pub pnp: PnpOptions,
    pub seed: u64,
}

impl Default for InitOptions {
    fn default() -> Self {
        Self {
            correspondences: 200,
            pnp: PnpOptions::default(),
            seed: 0,
        }
    }
}

/// One scan's initialization outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanInit {
    pub offset: (i64, i64),
    pub mi: f64,
    pub correspondences: usize,
    pub pnp_inliers: usize,
    pub rms_px: f64,
    #[serde(with = "crate::io::pose_serde")]
    pub pose: Pose,
}

/// Spherical projection, zoom, registration, correspondence sampling and PnP for one scan.
pub fn initialize_frame(frame: &CalibFrame, cfg: &SphericalConfig, opts: &InitOptions) -> Result<ScanInit> {
    let fixed = spherical_project(&frame.cloud, cfg)?;
    let zoomed = zoom_label_image(&frame.image, cfg)?;
    let reg = register_2d(&fixed, &zoomed.image)?;
    let corr = sample_correspondences(&fixed, &frame.cloud, &zoomed, &reg, opts.correspondences, opts.seed)?;
    let pnp = pnp_solve(&corr.points, &corr.pixels, &frame.intrinsics, &opts.pnp)?;
    Ok(ScanInit {
        offset: reg.offset,
        mi: reg.score,
        correspondences: corr.points.len(),
        pnp_inliers: pnp.inlier_count(),
        rms_px: pnp.rms_px,
        pose: pnp.pose,
    })
}

/// Per-scan results and the aggregate over all scans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitReport {
    pub scans: Vec<std::result::Result<ScanInit, String>>,
    pub aggregate: Option<InitAggregate>,
    /// Scans that failed outright or were rejected as outliers, over all scans.
    pub outlier_fraction: f64,
    #[serde(with = "crate::io::opt_pose_serde")]
    pub pose: Option<Pose>,
    pub failed: bool,
}

/// Initializes every frame and combines the successful scans.
///
/// Scans that fail count as outliers. With fewer than three successful scans
/// the z-score test is skipped and their twists are averaged directly.
pub fn initialize(frames: &[CalibFrame], cfg: &SphericalConfig, opts: &InitOptions) -> Result<InitReport> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("no frames".into()));
    }
    let scans: Vec<std::result::Result<ScanInit, String>> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let o = InitOptions {
                seed: opts.seed.wrapping_add(i as u64),
                pnp: PnpOptions {
                    seed: opts.pnp.seed.wrapping_add(i as u64),
                    ..opts.pnp
                },
                ..*opts
            };
            initialize_frame(f, cfg, &o).map_err(|e| e.to_string())
        })
        .collect();
    let poses: Vec<Pose> = scans.iter().filter_map(|s| s.as_ref().ok().map(|s| s.pose)).collect();
    let failed_scans = scans.len() - poses.len();
    let total = scans.len() as f64;
    let (aggregate, rejected, pose) = if poses.len() >= 3 {
        let agg = aggregate_inits(&poses)?;
        let rejected = agg.inliers.iter().filter(|b| !**b).count();
        let pose = agg.pose;
        (Some(agg), rejected, pose)
    } else if !poses.is_empty() {
        let mut mean = Vector6::zeros();
        for p in &poses {
            mean += se3_log(p)?.0;
        }
        (None, 0, Some(se3_exp(&Twist(mean / poses.len() as f64))?))
    } else {
        (None, 0, None)
    };
    let outlier_fraction = (failed_scans + rejected) as f64 / total;
    let failed = pose.is_none() || outlier_fraction > MAX_OUTLIER_FRACTION;
    Ok(InitReport {
        scans,
        aggregate,
        outlier_fraction,
        pose: if failed { None } else { pose },
        failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rot_y;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn cfg(h: usize, w: usize) -> SphericalConfig {
        SphericalConfig {
            lidar_fov_h_deg: 360.0,
            lidar_fov_v_deg: 30.0,
            channels: h,
            ring_points: w,
            camera_fov_h_deg: 90.0,
            camera_fov_v_deg: 20.0,
        }
    }

    fn cloud(points: Vec<Vector3<f64>>, labels: Vec<u8>, c: usize) -> PointCloudFrame {
        PointCloudFrame {
            points,
            labels,
            num_classes: c,
        }
    }

    #[test]
    fn forward_point_lands_in_center_bin() {
        let img = spherical_project(&cloud(vec![Vector3::new(5.0, 0.0, 0.0)], vec![2], 4), &cfg(64, 800)).unwrap();
        assert_eq!(img.get(32, 400), 2);
        assert_eq!(img.index[32 * 800 + 400], 0);
        assert_eq!(img.labeled_count(), 1);
    }

    #[test]
    fn nearest_point_wins_collisions() {
        let pts = vec![Vector3::new(5.0, 0.0, 0.0), Vector3::new(2.0, 0.0, 0.0)];
        let img = spherical_project(&cloud(pts, vec![1, 3], 4), &cfg(64, 800)).unwrap();
        assert_eq!(img.get(32, 400), 3);
        assert_eq!(img.index[32 * 800 + 400], 1);
        assert_eq!(img.range[32 * 800 + 400], 2.0);
    }

    #[test]
    fn empty_bins_hold_sentinel() {
        let img = spherical_project(&cloud(vec![Vector3::new(5.0, 0.0, 0.0)], vec![2], 4), &cfg(8, 16)).unwrap();
        assert_eq!(img.get(0, 0), 4);
        assert_eq!(img.index[0], -1);
    }

    #[test]
    fn zero_norm_and_out_of_fov_points() {
        let pts = vec![
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, 5.0),
            Vector3::new(1.0, 1.0, 0.0),
        ];
        let img = spherical_project(&cloud(pts, vec![0, 1, 2], 3), &cfg(8, 16)).unwrap();
        assert_eq!(img.skipped, 1);
        assert_eq!(img.labeled_count(), 1);
    }

    #[test]
    fn bin_centers_round_trip() {
        let c = cfg(16, 90);
        for row in 0..16 {
            for col in 0..90 {
                let (el, az) = (c.row_center_elevation(row), c.column_center_azimuth(col));
                let d = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
                assert_eq!(c.bin(&(d * 7.0)), Some((row, col)));
            }
        }
    }

    #[test]
    fn zoom_sizes() {
        let c = SphericalConfig {
            lidar_fov_h_deg: 360.0,
            lidar_fov_v_deg: 26.8,
            channels: 64,
            ring_points: 800,
            camera_fov_h_deg: 90.0,
            camera_fov_v_deg: 59.0,
        };
        assert_eq!(zoom_size(&c).0, 200);
    }

    #[test]
    fn zoom_is_nearest_neighbor() {
        let img = LabelImage::new(4, 4, 16, (0..16).collect()).unwrap();
        let z = zoom_to(&img, 2, 2).unwrap();
        for y in 0..2 {
            for x in 0..2 {
                let (sx, sy) = z.source_pixel(x, y);
                assert_eq!(z.image.get(x, y), img.get(sx, sy));
            }
        }
        assert_eq!(z.dezoom(0, 0), Vector2::new(0.5, 0.5));
        let same = zoom_to(&img, 4, 4).unwrap();
        assert_eq!(same.image, img);
        assert!(zoom_to(&img, 1, 4).is_err());
    }

    #[test]
    fn discrete_mi_cases() {
        let a = LabelImage::new(4, 2, 2, vec![0, 1, 0, 1, 1, 0, 1, 0]).unwrap();
        assert_eq!(discrete_mi(&a, &a, None).unwrap(), std::f64::consts::LN_2);
        let flat = LabelImage::filled(4, 2, 2, 1).unwrap();
        assert_eq!(discrete_mi(&a, &flat, None).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = LabelImage::new(9, 7, 4, (0..63).map(|_| rng.random_range(0..4)).collect()).unwrap();
        let y = LabelImage::new(9, 7, 3, (0..63).map(|_| rng.random_range(0..3)).collect()).unwrap();
        assert_relative_eq!(
            discrete_mi(&x, &y, None).unwrap(),
            discrete_mi(&y, &x, None).unwrap(),
            epsilon = 1e-15
        );
        let region = Region {
            x: 1,
            y: 1,
            width: 0,
            height: 2,
        };
        assert!(discrete_mi(&x, &y, Some(region)).is_err());
    }

    /// Spherical image with random rectangular class blobs.
    fn blob_scene(seed: u64, h: usize, w: usize, c: usize) -> SphericalLabelImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels = vec![0u8; h * w];
        for _ in 0..40 {
            let (bw, bh) = (rng.random_range(3..30), rng.random_range(2..h / 2));
            let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
            let class = rng.random_range(0..c) as u8;
            for y in y0..(y0 + bh).min(h) {
                for x in x0..x0 + bw {
                    labels[y * w + x % w] = class;
                }
            }
        }
        // Some empty bins.
        for _ in 0..h * w / 10 {
            labels[rng.random_range(0..h * w)] = c as u8;
        }
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| if l as usize == c { -1 } else { i as i64 })
            .collect();
        SphericalLabelImage {
            height: h,
            width: w,
            num_classes: c,
            labels,
            index,
            range: vec![1.0; h * w],
            skipped: 0,
        }
    }

    #[test]
    fn same_size_copy_registers_at_zero() {
        let fixed = blob_scene(3, 16, 120, 5);
        let moving = fixed.crop(0, 0, 16, 120, 0).unwrap();
        let reg = register_2d(&fixed, &moving).unwrap();
        assert_eq!(reg.offset, (0, 0));
        assert_eq!(Some(reg.score), reg.map.get(0, 0));
    }

    #[test]
    fn planted_crop_is_recovered() {
        for seed in 0..5 {
            let fixed = blob_scene(seed, 24, 160, 5);
            let (rows, cols) = (14, 40);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let (row0, col0) = (rng.random_range(0..=24 - rows), rng.random_range(0..160));
            let moving = fixed.crop(row0, col0, rows, cols, 0).unwrap();
            let reg = register_2d(&fixed, &moving).unwrap();
            // Offsets are relative to the centered placement.
            let base_col = (160 - cols as i64) / 2;
            let base_row = (24 - rows as i64) / 2;
            let du = (col0 as i64 - base_col + 80).rem_euclid(160) - 80;
            assert_eq!(reg.offset, (du, row0 as i64 - base_row), "seed {seed}");
            assert_eq!(reg.fixed_bin(0, 0), Some((row0, col0)));
        }
    }

    #[test]
    fn single_class_scene_is_degenerate() {
        let mut fixed = blob_scene(1, 8, 40, 3);
        fixed.labels.iter_mut().for_each(|l| *l = 1);
        fixed.index = (0..320).collect();
        let moving = LabelImage::filled(10, 4, 3, 1).unwrap();
        assert!(matches!(register_2d(&fixed, &moving), Err(Error::DegenerateScene(_))));
    }

    fn synthetic_pnp(n: usize, seed: u64, pose: &Pose, k: &CameraIntrinsics) -> (Vec<Vector3<f64>>, Vec<Vector2<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inv = pose.inverse();
        let mut pts = Vec::new();
        let mut px = Vec::new();
        while pts.len() < n {
            let q = Vector3::new(
                rng.random_range(-4.0..4.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(4.0..25.0),
            );
            let uv = k.project_camera_point(&q).unwrap();
            if k.contains(&uv) {
                pts.push(inv.transform_point(&q));
                px.push(uv);
            }
        }
        (pts, px)
    }

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::from_fov(1280, 720, 90.0).unwrap()
    }

    #[test]
    fn pnp_exact_recovery() {
        let truth = crate::synth::default_extrinsic();
        let (pts, px) = synthetic_pnp(20, 1, &truth, &k());
        let res = pnp_solve(&pts, &px, &k(), &PnpOptions::default()).unwrap();
        let (deg, m) = crate::synth::pose_error(&res.pose, &truth);
        assert!(deg.to_radians() < 1e-6 && m < 1e-6, "{deg} deg {m} m");
        assert_eq!(res.inlier_count(), 20);
    }

    #[test]
    fn pnp_identity_scene() {
        let (pts, px) = synthetic_pnp(12, 2, &Pose::identity(), &k());
        let res = pnp_solve(&pts, &px, &k(), &PnpOptions::default()).unwrap();
        assert_relative_eq!(res.pose.to_matrix(), Pose::identity().to_matrix(), epsilon = 1e-8);
    }

    #[test]
    fn pnp_rejects_gross_outliers() {
        let truth = crate::synth::default_extrinsic();
        let (mut pts, mut px) = synthetic_pnp(25, 3, &truth, &k());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for uv in px.iter_mut().skip(20) {
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            *uv += Vector2::new(a.cos(), a.sin()) * 100.0;
        }
        pts.rotate_left(7);
        px.rotate_left(7);
        let res = pnp_solve(&pts, &px, &k(), &PnpOptions::default()).unwrap();
        let (deg, m) = crate::synth::pose_error(&res.pose, &truth);
        assert!(deg.to_radians() < 1e-3 && m < 1e-3);
        assert_eq!(res.inlier_count(), 20);
        assert!(res.rms_px < 5.0);
    }

    #[test]
    fn pnp_degenerate_inputs() {
        let (pts, px) = synthetic_pnp(5, 5, &Pose::identity(), &k());
        assert!(matches!(
            pnp_solve(&pts, &px, &k(), &PnpOptions::default()),
            Err(Error::InvalidArgument(_))
        ));
        let planar: Vec<_> = (0..10)
            .map(|i| Vector3::new(i as f64 * 0.3 - 1.5, (i * i % 7) as f64 * 0.2 - 0.6, 8.0))
            .collect();
        let px: Vec<_> = planar.iter().map(|q| k().project_camera_point(q).unwrap()).collect();
        assert!(matches!(
            pnp_solve(&planar, &px, &k(), &PnpOptions::default()),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn z_score_hand_case() {
        let z = modified_z_scores(&[2.0, 4.0, 6.0, 100.0]).unwrap();
        assert_relative_eq!(z[3], 0.6745 * 95.0 / 2.0, epsilon = 1e-12);
        assert_relative_eq!(z[3], 32.039, epsilon = 1e-3);
        assert_eq!(modified_z_scores(&[3.0; 5]).unwrap(), vec![0.0; 5]);
        assert!(modified_z_scores(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_mad_flags_the_odd_one() {
        let z = modified_z_scores(&[1.0, 1.0, 1.0, 1.0, 2.0]).unwrap();
        assert_eq!(z[0], 0.0);
        assert!(z[4] > 1e9);
    }

    proptest! {
        #[test]
        fn z_scores_translation_and_scale_invariant(
            xs in proptest::collection::vec(-100.0f64..100.0, 3..20),
            shift in -50.0f64..50.0,
            scale in 0.1f64..10.0,
        ) {
            let base = modified_z_scores(&xs).unwrap();
            let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
            let scaled: Vec<f64> = xs.iter().map(|x| x * scale).collect();
            let a = modified_z_scores(&shifted).unwrap();
            let b = modified_z_scores(&scaled).unwrap();
            for i in 0..xs.len() {
                // Skip the zero-MAD fallback, where the 1e-12 floor does not scale.
                if base[i].abs() < 1e6 {
                    prop_assert!((a[i] - base[i]).abs() <= 1e-6 * (1.0 + base[i].abs()));
                    prop_assert!((b[i] - base[i]).abs() <= 1e-6 * (1.0 + base[i].abs()));
                }
            }
        }

        #[test]
        fn aggregation_is_permutation_invariant(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = crate::synth::default_extrinsic();
            let mut poses: Vec<Pose> = (0..8).map(|_| {
                let d: [f64; 6] = std::array::from_fn(|_| rng.random_range(-0.02..0.02));
                se3_exp(&Twist::from_slice(&d)).unwrap().compose(&base)
            }).collect();
            poses.push(Pose { rotation: rot_y(0.5) * base.rotation, translation: base.translation });
            let a = aggregate_inits(&poses).unwrap();
            poses.reverse();
            let mut b = aggregate_inits(&poses).unwrap();
            b.inliers.reverse();
            prop_assert_eq!(&a.inliers, &b.inliers);
            prop_assert_eq!(a.failed, b.failed);
            if let (Some(pa), Some(pb)) = (a.pose, b.pose) {
                prop_assert!((pa.to_matrix() - pb.to_matrix()).abs().max() < 1e-12);
            }
        }
    }

    #[test]
    fn aggregation_identical_poses() {
        let p = crate::synth::default_extrinsic();
        let agg = aggregate_inits(&[p; 10]).unwrap();
        assert!(agg.inliers.iter().all(|b| *b));
        assert!(!agg.failed);
        assert_relative_eq!(agg.pose.unwrap().to_matrix(), p.to_matrix(), epsilon = 1e-12);
    }

    #[test]
    fn aggregation_drops_rotated_pose() {
        let base = crate::synth::default_extrinsic();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut poses: Vec<Pose> = (0..9)
            .map(|_| {
                let d: [f64; 6] = std::array::from_fn(|_| rng.random_range(-0.005..0.005));
                se3_exp(&Twist::from_slice(&d)).unwrap().compose(&base)
            })
            .collect();
        poses.push(Pose {
            rotation: rot_y(30f64.to_radians()) * base.rotation,
            translation: base.translation,
        });
        let agg = aggregate_inits(&poses).unwrap();
        assert!(!agg.inliers[9]);
        assert_eq!(agg.inliers.iter().filter(|b| **b).count(), 9);
        let (deg, _) = crate::synth::pose_error(&agg.pose.unwrap(), &base);
        assert!(deg < 0.5);
    }
}
