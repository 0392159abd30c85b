//! Rigid transforms, their exponential parameterization and pinhole projection.
//!
//! Twists are ordered translation-first: `(t_x, t_y, t_z, r_x, r_y, r_z)`.
//! Pose derivatives are taken with respect to a left-multiplied increment
//! `exp(delta) * pose` evaluated at `delta = 0`, where the derivative of the
//! exponential is exactly the generator matrix.

use nalgebra::{Matrix3, Matrix4, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum camera-frame depth (meters) for a point to project.
pub const DEPTH_EPSILON: f64 = 1e-6;

const SMALL_ANGLE: f64 = 1e-8;

/// Lie-algebra coordinates of a rigid transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Twist(pub Vector6<f64>);

impl Twist {
    pub fn new(translation: Vector3<f64>, rotation: Vector3<f64>) -> Self {
        Self(Vector6::new(
            translation.x,
            translation.y,
            translation.z,
            rotation.x,
            rotation.y,
            rotation.z,
        ))
    }

    pub fn from_slice(v: &[f64; 6]) -> Self {
        Self(Vector6::from_row_slice(v))
    }

    pub fn zero() -> Self {
        Self(Vector6::zeros())
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn rotation(&self) -> Vector3<f64> {
        Vector3::new(self.0[3], self.0[4], self.0[5])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn to_array(&self) -> [f64; 6] {
        let mut out = [0.0; 6];
        out.copy_from_slice(self.0.as_slice());
        out
    }
}

/// Rigid transform `q = R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, checking that `rotation` is a proper rotation to 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = Self { rotation, translation };
        if !pose.is_valid(1e-9) {
            return Err(Error::InvalidArgument(
                "rotation is not orthonormal with unit determinant".into(),
            ));
        }
        Ok(pose)
    }

    /// Accepts a nearly orthonormal rotation (e.g. parsed from float text) and
    /// projects it onto SO(3).
    pub fn from_approx(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|x| x.is_finite()) {
            return Err(Error::NonFinite("pose entries".into()));
        }
        let rotation = nearest_rotation(&rotation)?;
        Ok(Self { rotation, translation })
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        ortho <= tol && (r.determinant() - 1.0).abs() <= tol && self.translation.iter().all(|x| x.is_finite())
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Row-major 4x4 rows.
    pub fn to_rows(&self) -> [[f64; 4]; 4] {
        let m = self.to_matrix();
        let mut rows = [[0.0; 4]; 4];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = m[(i, j)];
            }
        }
        rows
    }

    pub fn from_rows(rows: &[[f64; 4]; 4]) -> Result<Pose> {
        let rotation = Matrix3::from_fn(|i, j| rows[i][j]);
        let translation = Vector3::new(rows[0][3], rows[1][3], rows[2][3]);
        Pose::from_approx(rotation, translation)
    }
}

pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

pub fn rot_x(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Orthogonal projection of a 3x3 matrix onto SO(3).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateGeometry("svd failed".into())),
    };
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    Ok(u * d * v_t)
}

/// Rotation angle of `r` in radians, in `[0, pi]`.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    // acos loses precision near 0; recover the sine from the skew part.
    let w = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let s = 0.5 * w.norm();
    s.atan2(c)
}

fn so3_coefficients(theta: f64) -> (f64, f64, f64) {
    let t2 = theta * theta;
    if theta < SMALL_ANGLE {
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let (s, c) = theta.sin_cos();
        (s / theta, (1.0 - c) / t2, (theta - s) / (t2 * theta))
    }
}

/// Closed-form exponential of the twist's 4x4 generator combination.
pub fn se3_exp(v: &Twist) -> Result<Pose> {
    if !v.is_finite() {
        return Err(Error::InvalidArgument("twist has non-finite components".into()));
    }
    Ok(se3_exp_unchecked(v))
}

pub(crate) fn se3_exp_unchecked(v: &Twist) -> Pose {
    let w = v.rotation();
    let theta = w.norm();
    let (a, b, c) = so3_coefficients(theta);
    let k = hat(&w);
    let k2 = k * k;
    let rotation = Matrix3::identity() + k * a + k2 * b;
    let left_jacobian = Matrix3::identity() + k * b + k2 * c;
    Pose {
        rotation,
        translation: left_jacobian * v.translation(),
    }
}

/// Inverse of [`se3_exp`] for rotation angles below `pi - 1e-6`.
pub fn se3_log(p: &Pose) -> Result<Twist> {
    let theta = rotation_angle(&p.rotation);
    if theta >= std::f64::consts::PI - 1e-6 {
        return Err(Error::DegenerateRotation(theta));
    }
    let r = &p.rotation;
    let skew = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let scale = if theta < SMALL_ANGLE {
        0.5 * (1.0 + theta * theta / 6.0)
    } else {
        theta / (2.0 * theta.sin())
    };
    let w = skew * scale;
    let k = hat(&w);
    let (a, b, _) = so3_coefficients(theta);
    let d = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        (1.0 - a / (2.0 * b)) / (theta * theta)
    };
    let v_inv = Matrix3::identity() - k * 0.5 + k * k * d;
    Ok(Twist::new(v_inv * p.translation, w))
}

/// Pinhole intrinsics (pixels).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square pixels, principal point at the image center, given horizontal FoV.
    pub fn from_fov(width: usize, height: usize, horizontal_fov_deg: f64) -> Result<Self> {
        let f = (width as f64 / 2.0) / (horizontal_fov_deg.to_radians() / 2.0).tan();
        Self::new(f, f, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cx < self.width as f64
            && self.cy > 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid intrinsics {self:?}")))
        }
    }

    pub fn horizontal_fov_deg(&self) -> f64 {
        ((self.cx / self.fx).atan() + ((self.width as f64 - self.cx) / self.fx).atan()).to_degrees()
    }

    pub fn vertical_fov_deg(&self) -> f64 {
        ((self.cy / self.fy).atan() + ((self.height as f64 - self.cy) / self.fy).atan()).to_degrees()
    }

    /// Projects a camera-frame point; `None` if not in front of the camera.
    #[inline]
    pub fn project_camera_point(&self, q: &Vector3<f64>) -> Option<Vector2<f64>> {
        if q.z > DEPTH_EPSILON {
            Some(Vector2::new(
                self.fx * q.x / q.z + self.cx,
                self.fy * q.y / q.z + self.cy,
            ))
        } else {
            None
        }
    }

    #[inline]
    pub fn contains(&self, uv: &Vector2<f64>) -> bool {
        uv.x >= 0.0 && uv.y >= 0.0 && uv.x <= (self.width - 1) as f64 && uv.y <= (self.height - 1) as f64
    }
}

/// Projected pixel coordinates, aligned index-for-index with the input points.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedPoints {
    pub uv: Vec<Vector2<f64>>,
    pub depth: Vec<f64>,
    pub valid: Vec<bool>,
}

impl ProjectedPoints {
    pub fn len(&self) -> usize {
        self.uv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uv.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Projects LiDAR-frame points through `pose` and `k`. Points behind the camera
/// or outside the closed image rectangle are masked invalid, never dropped.
pub fn project(points: &[Vector3<f64>], pose: &Pose, k: &CameraIntrinsics) -> Result<ProjectedPoints> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("empty point list".into()));
    }
    let mut out = ProjectedPoints {
        uv: Vec::with_capacity(points.len()),
        depth: Vec::with_capacity(points.len()),
        valid: Vec::with_capacity(points.len()),
    };
    for p in points {
        let q = pose.transform_point(p);
        out.depth.push(q.z);
        match k.project_camera_point(&q) {
            Some(uv) => {
                out.valid.push(k.contains(&uv));
                out.uv.push(uv);
            }
            None => {
                out.valid.push(false);
                out.uv.push(Vector2::new(f64::NAN, f64::NAN));
            }
        }
    }
    Ok(out)
}

/// Gradient of `sum_i <grad_uv[i], uv_i>` with respect to a left increment
/// `exp(delta) * pose` at `delta = 0`, translation-first.
///
/// Entries of `grad_uv` at invalid points are ignored.
pub fn project_pullback(
    points: &[Vector3<f64>],
    pose: &Pose,
    k: &CameraIntrinsics,
    grad_uv: &[Vector2<f64>],
) -> Result<Vector6<f64>> {
    if points.len() != grad_uv.len() {
        return Err(Error::InvalidArgument(format!(
            "{} points but {} gradients",
            points.len(),
            grad_uv.len()
        )));
    }
    let mut total = Vector6::zeros();
    for (p, g) in points.iter().zip(grad_uv) {
        let q = pose.transform_point(p);
        match k.project_camera_point(&q) {
            Some(uv) if k.contains(&uv) => accumulate_point_pullback(&q, k, g, &mut total),
            _ => {}
        }
    }
    Ok(total)
}

/// Adds one camera-frame point's contribution to a pose gradient.
#[inline]
pub(crate) fn accumulate_point_pullback(
    q: &Vector3<f64>,
    k: &CameraIntrinsics,
    g: &Vector2<f64>,
    total: &mut Vector6<f64>,
) {
    let inv_z = 1.0 / q.z;
    // a = g^T d(uv)/dq
    let a = Vector3::new(
        g.x * k.fx * inv_z,
        g.y * k.fy * inv_z,
        -(g.x * k.fx * q.x + g.y * k.fy * q.y) * inv_z * inv_z,
    );
    // dq/d(rho) = I, dq/d(omega) = -[q]x  =>  rotation part is q x a.
    let r = q.cross(&a);
    total[0] += a.x;
    total[1] += a.y;
    total[2] += a.z;
    total[3] += r.x;
    total[4] += r.y;
    total[5] += r.z;
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix4;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Truncated power series of the 4x4 matrix exponential.
    fn series_exp(v: &Twist, terms: usize) -> Matrix4<f64> {
        let mut h = Matrix4::zeros();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(&v.rotation()));
        h.fixed_view_mut::<3, 1>(0, 3).copy_from(&v.translation());
        let mut term = Matrix4::identity();
        let mut sum = Matrix4::identity();
        for n in 1..terms {
            term = term * h / n as f64;
            sum += term;
        }
        sum
    }

    fn test_camera() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 640.0, 360.0, 1280, 720).unwrap()
    }

    fn random_pose(rng: &mut ChaCha8Rng, max_angle: f64) -> Pose {
        let dir = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let w = dir.normalize() * rng.random_range(0.0..max_angle);
        let t = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        se3_exp(&Twist::new(t, w)).unwrap()
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let p = se3_exp(&Twist::zero()).unwrap();
        assert_eq!(p, Pose::identity());
    }

    #[test]
    fn exp_of_pure_translation() {
        let p = se3_exp(&Twist::from_slice(&[1.0, 2.0, 3.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(p.rotation, Matrix3::identity());
        assert_eq!(p.translation, Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn exp_quarter_turn_matches_series() {
        let v = Twist::from_slice(&[0.0, 0.0, 0.0, 0.0, 0.0, PI / 2.0]);
        let series = series_exp(&v, 30);
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(series.fixed_view::<3, 3>(0, 0).into_owned(), expected, epsilon = 1e-12);
        let p = se3_exp(&v).unwrap();
        assert_relative_eq!(p.rotation, expected, epsilon = 1e-12);
        assert_relative_eq!(p.translation, Vector3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn exp_matches_series_for_random_twists() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let v = Twist::from_slice(&std::array::from_fn(|_| rng.random_range(-1.5..1.5)));
            let series = series_exp(&v, 40);
            assert_relative_eq!(se3_exp(&v).unwrap().to_matrix(), series, epsilon = 1e-10);
        }
    }

    #[test]
    fn exp_rejects_non_finite() {
        let v = Twist::from_slice(&[0.0, f64::NAN, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(se3_exp(&v), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn exp_small_angle_branch_is_continuous() {
        let tiny = Twist::from_slice(&[0.3, -0.2, 0.1, 1e-9, -2e-9, 5e-10]);
        let series = series_exp(&tiny, 10);
        assert_relative_eq!(se3_exp(&tiny).unwrap().to_matrix(), series, epsilon = 1e-15);
    }

    #[test]
    fn log_of_identity_is_zero() {
        assert_eq!(se3_log(&Pose::identity()).unwrap(), Twist::zero());
    }

    #[test]
    fn log_quarter_turn() {
        let p = Pose {
            rotation: rot_z(PI / 2.0),
            translation: Vector3::zeros(),
        };
        let v = se3_log(&p).unwrap();
        assert_relative_eq!(
            v.0,
            Twist::from_slice(&[0.0, 0.0, 0.0, 0.0, 0.0, PI / 2.0]).0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn log_rejects_half_turn() {
        let p = Pose {
            rotation: rot_x(PI),
            translation: Vector3::zeros(),
        };
        assert!(matches!(se3_log(&p), Err(Error::DegenerateRotation(_))));
    }

    #[test]
    fn log_exp_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let pose = random_pose(&mut rng, 3.0);
            let back = se3_exp(&se3_log(&pose).unwrap()).unwrap();
            assert_relative_eq!(back.to_matrix(), pose.to_matrix(), epsilon = 1e-9);
        }
    }

    #[test]
    fn principal_point_projection() {
        let k = test_camera();
        let pts = [
            Vector3::new(0.0, 0.0, 5.0),
            Vector3::new(1.0, 0.0, 5.0),
            Vector3::new(0.0, 0.0, -1.0),
        ];
        let proj = project(&pts, &Pose::identity(), &k).unwrap();
        assert_eq!(proj.uv[0], Vector2::new(640.0, 360.0));
        assert_eq!(proj.uv[1], Vector2::new(740.0, 360.0));
        assert_eq!(proj.valid, vec![true, true, false]);
        assert_eq!(proj.len(), 3);
    }

    #[test]
    fn border_pixels_are_valid() {
        let k = test_camera();
        // u = 500 * x / 1 + 640 = 1279 exactly
        let pts = [
            Vector3::new(639.0 / 500.0, 0.0, 1.0),
            Vector3::new(639.5 / 500.0, 0.0, 1.0),
        ];
        let proj = project(&pts, &Pose::identity(), &k).unwrap();
        assert_eq!(proj.valid, vec![true, false]);
    }

    #[test]
    fn project_rejects_empty() {
        assert!(project(&[], &Pose::identity(), &test_camera()).is_err());
    }

    #[test]
    fn pullback_zero_gradient() {
        let k = test_camera();
        let pts = [Vector3::new(0.3, 0.1, 4.0)];
        let g = project_pullback(&pts, &Pose::identity(), &k, &[Vector2::zeros()]).unwrap();
        assert_eq!(g, Vector6::zeros());
    }

    #[test]
    fn pullback_length_mismatch() {
        let k = test_camera();
        let pts = [Vector3::new(0.3, 0.1, 4.0)];
        assert!(project_pullback(&pts, &Pose::identity(), &k, &[]).is_err());
    }

    #[test]
    fn pullback_translation_on_optical_axis() {
        let k = test_camera();
        let pts = [Vector3::new(0.0, 0.0, 5.0)];
        let g = project_pullback(&pts, &Pose::identity(), &k, &[Vector2::new(1.0, 0.0)]).unwrap();
        assert_relative_eq!(g[0], 500.0 / 5.0, epsilon = 1e-12);
        assert_relative_eq!(g[1], 0.0, epsilon = 1e-12);
    }

    fn objective(points: &[Vector3<f64>], pose: &Pose, k: &CameraIntrinsics, g: &[Vector2<f64>]) -> f64 {
        points
            .iter()
            .zip(g)
            .map(|(p, g)| {
                let q = pose.transform_point(p);
                let uv = k.project_camera_point(&q).unwrap();
                g.dot(&uv)
            })
            .sum()
    }

    #[test]
    fn pullback_matches_finite_differences() {
        let k = test_camera();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let h = 1e-6;
        for _ in 0..100 {
            let pose = random_pose(&mut rng, 0.2);
            let p = Vector3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(4.0..20.0),
            );
            let p = pose.inverse().transform_point(&p);
            let g = [Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))];
            let analytic = project_pullback(&[p], &pose, &k, &g).unwrap();
            let mut fd = Vector6::zeros();
            for j in 0..6 {
                let mut d = Vector6::zeros();
                d[j] = h;
                let plus = se3_exp(&Twist(d)).unwrap().compose(&pose);
                let minus = se3_exp(&Twist(-d)).unwrap().compose(&pose);
                fd[j] = (objective(&[p], &plus, &k, &g) - objective(&[p], &minus, &k, &g)) / (2.0 * h);
            }
            let rel = (analytic - fd).norm() / analytic.norm().max(fd.norm());
            assert!(rel < 1e-5, "relative error {rel}");
        }
    }

    proptest! {
        #[test]
        fn exp_output_is_a_rotation(v in proptest::array::uniform6(-3.0f64..3.0)) {
            let p = se3_exp(&Twist::from_slice(&v)).unwrap();
            prop_assert!(p.is_valid(1e-9));
        }

        #[test]
        fn log_inverts_exp(t in proptest::array::uniform3(-5.0f64..5.0), w in proptest::array::uniform3(-1.7f64..1.7)) {
            let w = Vector3::from(w);
            prop_assume!(w.norm() < PI - 1e-3);
            let v = Twist::new(Vector3::from(t), w);
            let back = se3_log(&se3_exp(&v).unwrap()).unwrap();
            prop_assert!((back.0 - v.0).abs().max() < 1e-9);
        }

        #[test]
        fn projection_is_scale_consistent(x in -2.0f64..2.0, y in -1.0f64..1.0, z in 2.0f64..30.0, s in 0.1f64..10.0) {
            let k = test_camera();
            let pose = se3_exp(&Twist::from_slice(&[0.1, -0.2, 0.05, 0.02, -0.03, 0.01])).unwrap();
            // Scale along the camera ray through the camera center.
            let q = Vector3::new(x, y, z);
            let p1 = pose.inverse().transform_point(&q);
            let p2 = pose.inverse().transform_point(&(q * s));
            let a = project(&[p1, p2], &pose, &k).unwrap();
            prop_assert!((a.uv[0] - a.uv[1]).norm() < 1e-9);
        }
    }
}
