//! Procedural labeled scenes with exact ground truth.
//!
//! A scene is a ground plane plus randomly placed boxes, vertical cylinders
//! and flat ground patches, each carrying a semantic class. The LiDAR is
//! simulated by casting one ray per spherical bin center; the camera label
//! image by casting one ray per pixel center. Both use nearest-hit ray
//! casting, so occlusion is geometric for both sensors.
//!
//! Class ontology: `0` ground, `1` sky (camera only: rays that hit nothing),
//! `2..C` objects.

use std::sync::Arc;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibrator::{CalibFrame, PointCloudFrame};
use crate::error::{Error, Result};
use crate::geometry::{rot_x, rot_y, rot_z, rotation_angle, CameraIntrinsics, Pose, Twist};
use crate::initializer::SphericalConfig;
use crate::sampling::LabelImage;

pub const GROUND_CLASS: u8 = 0;
pub const SKY_CLASS: u8 = 1;

/// Scene generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub seed: u64,
    pub num_classes: usize,
    /// Inclusive range of standing objects (boxes and cylinders) per frame.
    pub objects: (usize, usize),
    /// Inclusive range of flat ground patches per frame.
    pub ground_patches: (usize, usize),
    /// Horizontal distance range (meters) for object placement.
    pub placement_range: (f64, f64),
    /// Fraction of objects placed within the forward sector `+-forward_sector_deg`.
    pub forward_fraction: f64,
    pub forward_sector_deg: f64,
    #[serde(with = "crate::io::pose_serde")]
    pub ground_truth: Pose,
    pub lidar: SphericalConfig,
    pub camera: CameraIntrinsics,
    /// LiDAR height above the ground plane (meters).
    pub lidar_height: f64,
    pub lidar_max_range: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        let camera = CameraIntrinsics::from_fov(1280, 720, 90.0).expect("valid default camera");
        Self {
            seed: 0,
            num_classes: 8,
            objects: (14, 24),
            ground_patches: (2, 5),
            placement_range: (4.0, 30.0),
            forward_fraction: 0.75,
            forward_sector_deg: 50.0,
            ground_truth: default_extrinsic(),
            lidar: SphericalConfig {
                lidar_fov_h_deg: 360.0,
                lidar_fov_v_deg: 64.0,
                channels: 64,
                ring_points: 800,
                camera_fov_h_deg: camera.horizontal_fov_deg(),
                camera_fov_v_deg: camera.vertical_fov_deg(),
            },
            camera,
            lidar_height: 1.73,
            lidar_max_range: 100.0,
        }
    }
}

/// Camera looking along the LiDAR `+x` axis, slightly rotated and offset.
///
/// LiDAR axes: x forward, y left, z up. Camera axes: x right, y down, z forward.
pub fn default_extrinsic() -> Pose {
    let axes = Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
    let tilt = rot_z(0.8f64.to_radians()) * rot_y(-1.2f64.to_radians()) * rot_x(1.5f64.to_radians());
    let rotation = tilt * axes;
    let center = Vector3::new(0.27, -0.08, -0.12);
    Pose {
        rotation,
        translation: -(rotation * center),
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.num_classes > 254 {
            return Err(Error::InvalidConfig(format!(
                "num_classes {} outside 2..=254",
                self.num_classes
            )));
        }
        if self.objects.0 > self.objects.1 || self.ground_patches.0 > self.ground_patches.1 {
            return Err(Error::InvalidConfig("object count range is inverted".into()));
        }
        let (lo, hi) = self.placement_range;
        if !(lo >= 2.0 && hi > lo && hi < self.lidar_max_range) {
            return Err(Error::InvalidConfig(
                "placement range must lie in [2 m, max range)".into(),
            ));
        }
        if !(self.lidar_height > 0.0) {
            return Err(Error::InvalidConfig("lidar height must be positive".into()));
        }
        if !self.ground_truth.is_valid(1e-9) {
            return Err(Error::InvalidConfig(
                "ground-truth pose is not a rigid transform".into(),
            ));
        }
        self.lidar.validate()?;
        self.camera.validate()
    }
}

/// Scene primitive in the LiDAR frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    /// Box rotated by `yaw` about the vertical axis.
    Box {
        center: [f64; 3],
        half_extent: [f64; 3],
        yaw: f64,
        class: u8,
    },
    /// Vertical cylinder from `z_min` to `z_max`.
    Cylinder {
        center: [f64; 2],
        radius: f64,
        z_min: f64,
        z_max: f64,
        class: u8,
    },
}

impl Primitive {
    pub fn class(&self) -> u8 {
        match self {
            Primitive::Box { class, .. } | Primitive::Cylinder { class, .. } => *class,
        }
    }

    /// Nearest ray parameter `t > t_min` where the ray enters the primitive.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, t_min: f64) -> Option<f64> {
        match *self {
            Primitive::Box {
                center,
                half_extent,
                yaw,
                ..
            } => {
                let (s, c) = yaw.sin_cos();
                let rel = origin - Vector3::from(center);
                // Rotate into the box frame by -yaw.
                let o = Vector3::new(c * rel.x + s * rel.y, -s * rel.x + c * rel.y, rel.z);
                let d = Vector3::new(c * dir.x + s * dir.y, -s * dir.x + c * dir.y, dir.z);
                let mut t0 = f64::NEG_INFINITY;
                let mut t1 = f64::INFINITY;
                for k in 0..3 {
                    let h = half_extent[k];
                    if d[k].abs() < 1e-15 {
                        if o[k].abs() > h {
                            return None;
                        }
                        continue;
                    }
                    let inv = 1.0 / d[k];
                    let (mut a, mut b) = ((-h - o[k]) * inv, (h - o[k]) * inv);
                    if a > b {
                        std::mem::swap(&mut a, &mut b);
                    }
                    t0 = t0.max(a);
                    t1 = t1.min(b);
                    if t0 > t1 {
                        return None;
                    }
                }
                (t0 > t_min).then_some(t0)
            }
            Primitive::Cylinder {
                center,
                radius,
                z_min,
                z_max,
                ..
            } => {
                let ox = origin.x - center[0];
                let oy = origin.y - center[1];
                let mut best: Option<f64> = None;
                let a = dir.x * dir.x + dir.y * dir.y;
                if a > 1e-15 {
                    let b = ox * dir.x + oy * dir.y;
                    let c = ox * ox + oy * oy - radius * radius;
                    let disc = b * b - a * c;
                    if disc >= 0.0 {
                        let t = (-b - disc.sqrt()) / a;
                        let z = origin.z + t * dir.z;
                        if t > t_min && z >= z_min && z <= z_max {
                            best = Some(t);
                        }
                    }
                }
                // Top cap (seen from above).
                if dir.z < 0.0 && origin.z > z_max {
                    let t = (z_max - origin.z) / dir.z;
                    let x = ox + t * dir.x;
                    let y = oy + t * dir.y;
                    if t > t_min && x * x + y * y <= radius * radius && best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                }
                best
            }
        }
    }

    fn bounding_sphere(&self) -> (Vector3<f64>, f64) {
        match *self {
            Primitive::Box {
                center, half_extent, ..
            } => (Vector3::from(center), Vector3::from(half_extent).norm()),
            Primitive::Cylinder {
                center,
                radius,
                z_min,
                z_max,
                ..
            } => {
                let half = 0.5 * (z_max - z_min);
                (Vector3::new(center[0], center[1], z_min + half), radius.hypot(half))
            }
        }
    }

    fn horizontal_center(&self) -> Vector2<f64> {
        match self {
            Primitive::Box { center, .. } => Vector2::new(center[0], center[1]),
            Primitive::Cylinder { center, .. } => Vector2::new(center[0], center[1]),
        }
    }
}

/// One frame's objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneLayout {
    pub objects: Vec<Primitive>,
}

impl SceneLayout {
    /// Nearest hit along a unit ray as `(distance, class)`, ground included.
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, ground_z: f64, max_range: f64) -> Option<(f64, u8)> {
        Caster::new(self).cast(origin, dir, ground_z, max_range)
    }
}

/// Primitives with bounding spheres for cheap ray rejection.
struct Caster<'a> {
    objects: Vec<(&'a Primitive, Vector3<f64>, f64)>,
}

impl<'a> Caster<'a> {
    fn new(layout: &'a SceneLayout) -> Self {
        let objects = layout
            .objects
            .iter()
            .map(|p| {
                let (c, r) = p.bounding_sphere();
                (p, c, r)
            })
            .collect();
        Self { objects }
    }

    fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, ground_z: f64, max_range: f64) -> Option<(f64, u8)> {
        let mut best: Option<(f64, u8)> = None;
        if dir.z < -1e-12 {
            let t = (ground_z - origin.z) / dir.z;
            if t > 0.0 && t <= max_range {
                best = Some((t, GROUND_CLASS));
            }
        }
        for (obj, center, radius) in &self.objects {
            let oc = center - origin;
            let tc = oc.dot(dir);
            if tc + radius < 0.0 || oc.norm_squared() - tc * tc > radius * radius {
                continue;
            }
            if best.is_some_and(|(b, _)| tc - radius > b) {
                continue;
            }
            if let Some(t) = obj.intersect(origin, dir, 1e-9) {
                if t <= max_range && best.is_none_or(|(b, _)| t < b) {
                    best = Some((t, obj.class()));
                }
            }
        }
        best
    }
}

/// Description of a generated bundle, written next to the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub spec: SceneSpec,
    pub layouts: Vec<SceneLayout>,
}

/// Generated frames with their ground-truth extrinsic.
#[derive(Debug, Clone)]
pub struct GroundTruthBundle {
    pub frames: Vec<CalibFrame>,
    pub ground_truth: Pose,
    pub manifest: SceneManifest,
}

fn frame_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_layout(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> SceneLayout {
    let ground_z = -spec.lidar_height;
    let object_classes = spec.num_classes.saturating_sub(2);
    let mut objects = Vec::new();
    if object_classes == 0 {
        return SceneLayout { objects };
    }
    let (lo, hi) = spec.placement_range;
    let forward = spec.forward_sector_deg.to_radians();
    let place = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> Vector2<f64> {
        let az = if rng.random_bool(spec.forward_fraction) {
            rng.random_range(-forward..forward)
        } else {
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)
        };
        let r = rng.random_range(lo..hi);
        Vector2::new(r * az.cos(), r * az.sin())
    };
    let class = |rng: &mut ChaCha8Rng| (2 + rng.random_range(0..object_classes)) as u8;

    let patches = rng.random_range(spec.ground_patches.0..=spec.ground_patches.1);
    for _ in 0..patches {
        let c = place(rng, lo, (lo + hi) * 0.5);
        let thickness = 0.03;
        objects.push(Primitive::Box {
            center: [c.x, c.y, ground_z + thickness],
            half_extent: [rng.random_range(1.0..4.0), rng.random_range(1.0..4.0), thickness],
            yaw: rng.random_range(0.0..std::f64::consts::PI),
            class: class(rng),
        });
    }
    let count = rng.random_range(spec.objects.0..=spec.objects.1);
    let mut centers: Vec<(Vector2<f64>, f64)> = Vec::new();
    let mut attempts = 0;
    while centers.len() < count && attempts < count * 20 {
        attempts += 1;
        let kind = rng.random_range(0..10);
        let c = place(rng, lo, hi);
        let obj = if kind < 5 {
            let half = [
                rng.random_range(0.4..2.5),
                rng.random_range(0.4..2.5),
                rng.random_range(0.4..2.0),
            ];
            Primitive::Box {
                center: [c.x, c.y, ground_z + half[2]],
                half_extent: half,
                yaw: rng.random_range(0.0..std::f64::consts::PI),
                class: class(rng),
            }
        } else if kind < 8 {
            let height = rng.random_range(1.5..6.0);
            Primitive::Cylinder {
                center: [c.x, c.y],
                radius: rng.random_range(0.15..0.7),
                z_min: ground_z,
                z_max: ground_z + height,
                class: class(rng),
            }
        } else {
            // Building-like block, pushed to the far half of the range.
            let c = place(rng, (lo + hi) * 0.5, hi);
            let half = [
                rng.random_range(2.0..6.0),
                rng.random_range(2.0..6.0),
                rng.random_range(3.0..8.0),
            ];
            Primitive::Box {
                center: [c.x, c.y, ground_z + half[2]],
                half_extent: half,
                yaw: rng.random_range(0.0..std::f64::consts::PI),
                class: class(rng),
            }
        };
        let radius = match obj {
            Primitive::Box { half_extent, .. } => half_extent[0].hypot(half_extent[1]),
            Primitive::Cylinder { radius, .. } => radius,
        };
        let center = obj.horizontal_center();
        // Keep both sensors outside every object and avoid interpenetration.
        if center.norm() - radius < 2.0 {
            continue;
        }
        if centers.iter().any(|(c2, r2)| (c2 - center).norm() < r2 + radius + 0.3) {
            continue;
        }
        centers.push((center, radius));
        objects.push(obj);
    }
    SceneLayout { objects }
}

/// Ray-cast LiDAR scan: one ray per spherical bin center.
pub fn scan_lidar(spec: &SceneSpec, layout: &SceneLayout) -> PointCloudFrame {
    let cfg = &spec.lidar;
    let origin = Vector3::zeros();
    let caster = Caster::new(layout);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for row in 0..cfg.channels {
        let el = cfg.row_center_elevation(row);
        for col in 0..cfg.ring_points {
            let az = cfg.column_center_azimuth(col);
            let dir = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            if let Some((t, class)) = caster.cast(&origin, &dir, -spec.lidar_height, spec.lidar_max_range) {
                points.push(dir * t);
                labels.push(class);
            }
        }
    }
    PointCloudFrame {
        points,
        labels,
        num_classes: spec.num_classes,
    }
}

/// Ray-cast semantic camera image: one ray per pixel center; misses are sky.
pub fn render_camera(spec: &SceneSpec, layout: &SceneLayout) -> LabelImage {
    let k = &spec.camera;
    let pose = &spec.ground_truth;
    let rt = pose.rotation.transpose();
    let origin = -(rt * pose.translation);
    let caster = Caster::new(layout);
    let mut labels = vec![SKY_CLASS; k.width * k.height];
    for v in 0..k.height {
        for u in 0..k.width {
            let d_cam = Vector3::new((u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0);
            let dir = (rt * d_cam).normalize();
            if let Some((_, class)) = caster.cast(&origin, &dir, -spec.lidar_height, f64::INFINITY) {
                labels[v * k.width + u] = class;
            }
        }
    }
    LabelImage::new(k.width, k.height, spec.num_classes, labels).expect("classes below num_classes")
}

/// Generates `n_frames` independent random layouts and their sensor data.
pub fn generate(spec: &SceneSpec, n_frames: usize) -> Result<GroundTruthBundle> {
    spec.validate()?;
    let mut frames = Vec::with_capacity(n_frames);
    let mut layouts = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let mut rng = frame_rng(spec.seed, i as u64 + 1);
        let layout = random_layout(spec, &mut rng);
        let cloud = scan_lidar(spec, &layout);
        let image = render_camera(spec, &layout);
        frames.push(CalibFrame::new(cloud, Arc::new(image), spec.camera)?);
        layouts.push(layout);
    }
    Ok(GroundTruthBundle {
        frames,
        ground_truth: spec.ground_truth,
        manifest: SceneManifest {
            spec: spec.clone(),
            layouts,
        },
    })
}

/// Uniformly random class different from `old`.
fn flip<R: Rng>(old: u8, num_classes: usize, rng: &mut R) -> u8 {
    let shift = 1 + rng.random_range(0..num_classes - 1);
    ((old as usize + shift) % num_classes) as u8
}

/// Independently replaces each point and pixel label, with probability `rate`,
/// by a uniformly random different class.
pub fn corrupt_labels(bundle: &GroundTruthBundle, rate: f64, seed: u64) -> Result<GroundTruthBundle> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("noise rate {rate} outside [0, 1]")));
    }
    let mut out = bundle.clone();
    if rate == 0.0 {
        return Ok(out);
    }
    for (i, frame) in out.frames.iter_mut().enumerate() {
        let mut rng = frame_rng(seed, i as u64 + 1);
        let c = frame.cloud.num_classes;
        for l in frame.cloud.labels.iter_mut() {
            if rng.random_bool(rate) {
                *l = flip(*l, c, &mut rng);
            }
        }
        let mut image = (*frame.image).clone();
        for l in image.labels_mut() {
            if rng.random_bool(rate) {
                *l = flip(*l, c, &mut rng);
            }
        }
        *frame = CalibFrame::new(frame.cloud.clone(), Arc::new(image), frame.intrinsics)?;
    }
    Ok(out)
}

/// `gt` displaced by `rot_deg` about and `trans_m` along every axis, with
/// per-axis signs drawn from `seed`.
pub fn perturb(gt: &Pose, rot_deg: f64, trans_m: f64, seed: u64) -> Pose {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sign = || if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let r = rot_deg.to_radians();
    let d = [
        trans_m * sign(),
        trans_m * sign(),
        trans_m * sign(),
        r * sign(),
        r * sign(),
        r * sign(),
    ];
    crate::geometry::se3_exp_unchecked(&Twist::from_slice(&d)).compose(gt)
}

/// Rotation error (degrees) and translation error (meters) of `est` against `gt`.
pub fn pose_error(est: &Pose, gt: &Pose) -> (f64, f64) {
    let angle = rotation_angle(&(est.rotation * gt.rotation.transpose()));
    (angle.to_degrees(), (est.translation - gt.translation).norm())
}

/// Fraction of valid LiDAR points whose label matches the pixel nearest to
/// their projection under `pose`.
pub fn label_agreement(frame: &CalibFrame, pose: &Pose) -> f64 {
    let k = &frame.intrinsics;
    let mut agree = 0usize;
    let mut total = 0usize;
    for (p, &l) in frame.cloud.points.iter().zip(&frame.cloud.labels) {
        let q = pose.transform_point(p);
        if let Some(uv) = k.project_camera_point(&q) {
            if k.contains(&uv) {
                total += 1;
                let (x, y) = (uv.x.round() as usize, uv.y.round() as usize);
                if frame.image.get(x, y) == l {
                    agree += 1;
                }
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        agree as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{se3_exp, Twist};
    use approx::assert_relative_eq;

    fn small_spec(seed: u64) -> SceneSpec {
        let camera = CameraIntrinsics::from_fov(320, 180, 90.0).unwrap();
        SceneSpec {
            seed,
            camera,
            lidar: SphericalConfig {
                channels: 32,
                ring_points: 400,
                camera_fov_h_deg: camera.horizontal_fov_deg(),
                camera_fov_v_deg: camera.vertical_fov_deg(),
                ..SceneSpec::default().lidar
            },
            ..SceneSpec::default()
        }
    }

    #[test]
    fn default_extrinsic_is_rigid() {
        assert!(default_extrinsic().is_valid(1e-12));
        let spec = SceneSpec::default();
        spec.validate().unwrap();
        assert_relative_eq!(spec.camera.fx, 640.0, epsilon = 1e-9);
    }

    #[test]
    fn same_seed_same_bundle() {
        let a = generate(&small_spec(3), 2).unwrap();
        let b = generate(&small_spec(3), 2).unwrap();
        assert_eq!(a.manifest, b.manifest);
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            assert_eq!(fa.cloud, fb.cloud);
            assert_eq!(fa.image, fb.image);
        }
        let c = generate(&small_spec(4), 1).unwrap();
        assert_ne!(a.frames[0].cloud, c.frames[0].cloud);
    }

    #[test]
    fn empty_scene_is_all_ground() {
        let spec = SceneSpec {
            objects: (0, 0),
            ground_patches: (0, 0),
            ..small_spec(1)
        };
        let bundle = generate(&spec, 1).unwrap();
        let frame = &bundle.frames[0];
        assert!(!frame.cloud.points.is_empty());
        assert!(frame.cloud.labels.iter().all(|&l| l == GROUND_CLASS));
        // Every pixel whose ray reaches geometry sees ground; the rest is sky.
        assert!(frame
            .image
            .labels()
            .iter()
            .all(|&l| l == GROUND_CLASS || l == SKY_CLASS));
        assert!(frame.image.labels().contains(&GROUND_CLASS));
    }

    #[test]
    fn labels_agree_under_ground_truth() {
        let spec = SceneSpec {
            seed: 9,
            ..SceneSpec::default()
        };
        let bundle = generate(&spec, 2).unwrap();
        for frame in &bundle.frames {
            let agreement = label_agreement(frame, &bundle.ground_truth);
            assert!(agreement >= 0.95, "agreement {agreement}");
            frame.validate().unwrap();
        }
    }

    #[test]
    fn points_lie_on_primitives() {
        let spec = small_spec(5);
        let bundle = generate(&spec, 1).unwrap();
        for p in &bundle.frames[0].cloud.points {
            assert!(p.norm() <= spec.lidar_max_range + 1e-9);
            assert!(p.z >= -spec.lidar_height - 1e-9);
        }
    }

    #[test]
    fn corruption_rates() {
        let bundle = generate(&small_spec(2), 2).unwrap();
        let same = corrupt_labels(&bundle, 0.0, 1).unwrap();
        assert_eq!(same.frames[0].cloud, bundle.frames[0].cloud);

        let all = corrupt_labels(&bundle, 1.0, 1).unwrap();
        for (a, b) in all.frames.iter().zip(&bundle.frames) {
            assert!(a.cloud.labels.iter().zip(&b.cloud.labels).all(|(x, y)| x != y));
            assert!(a.image.labels().iter().zip(b.image.labels()).all(|(x, y)| x != y));
        }

        let some = corrupt_labels(&bundle, 0.2, 7).unwrap();
        let mut flipped = 0usize;
        let mut total = 0usize;
        for (a, b) in some.frames.iter().zip(&bundle.frames) {
            for (x, y) in a
                .cloud
                .labels
                .iter()
                .zip(&b.cloud.labels)
                .chain(a.image.labels().iter().zip(b.image.labels()))
            {
                total += 1;
                flipped += (x != y) as usize;
            }
        }
        assert!(total >= 100_000);
        let rate = flipped as f64 / total as f64;
        assert!((rate - 0.2).abs() <= 0.01, "rate {rate}");
        assert!(corrupt_labels(&bundle, 1.5, 0).is_err());
    }

    #[test]
    fn pose_error_cases() {
        let gt = default_extrinsic();
        assert_eq!(pose_error(&gt, &gt), (0.0, 0.0));
        let quarter = Pose {
            rotation: rot_z(std::f64::consts::FRAC_PI_2) * gt.rotation,
            translation: gt.translation,
        };
        let (deg, m) = pose_error(&quarter, &gt);
        assert_relative_eq!(deg, 90.0, epsilon = 1e-9);
        assert_relative_eq!(m, 0.0, epsilon = 1e-12);

        let delta = Twist::from_slice(&[0.0, 0.0, 0.0, 0.004, -0.007, 0.002]);
        let est = se3_exp(&delta).unwrap().compose(&gt);
        let (deg, _) = pose_error(&est, &gt);
        assert_relative_eq!(deg, delta.rotation().norm().to_degrees(), max_relative = 1e-9);
    }
}
