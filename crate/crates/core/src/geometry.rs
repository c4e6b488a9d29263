//! Camera model, gravity alignment and homography bookkeeping.
//!
//! Conventions used throughout the crate:
//!
//! * Image coordinates are centered on the distortion center (assumed to be the
//!   principal point) and divided by half the image diagonal, see [`ImageFrame`].
//! * Rotations are world-to-camera. The world frame is gravity aligned with the
//!   `y` axis pointing *down*, so the ground plane has normal `n = [0, 1, 0]`
//!   and lies at unit distance below the first camera.
//! * The gravity-aligned homography maps aligned rays of the first view to
//!   aligned rays of the second view: `H_y = I + t n^T`.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Smallest |h33| (and |H_y scale|) accepted when normalizing a homography.
pub const NORMALIZATION_EPS: f64 = 1e-12;
/// Translations shorter than this have no defined direction.
pub const ZERO_TRANSLATION_EPS: f64 = 1e-12;
/// Maximum deviation of a quaternion norm from one accepted on input.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-6;

/// A measured (distorted) image point in normalized, distortion-centered units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagePoint {
    pub x: f64,
    pub y: f64,
}

impl ImagePoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_vec(v: Vec2) -> Self {
        Self { x: v.x, y: v.y }
    }

    pub fn to_vec(self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn homogeneous(self) -> Vec3 {
        Vec3::new(self.x, self.y, 1.0)
    }

    pub fn radius_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Focal length and division-model coefficient shared by both views.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub f: f64,
    pub lambda: f64,
}

impl Intrinsics {
    pub fn new(f: f64, lambda: f64) -> Result<Self> {
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::InvalidIntrinsics(format!("focal length {f} must be > 0")));
        }
        if !lambda.is_finite() {
            return Err(Error::InvalidIntrinsics(format!("lambda {lambda} must be finite")));
        }
        Ok(Self { f, lambda })
    }

    /// Undistorted pinhole camera with focal length `f`.
    pub fn pinhole(f: f64) -> Result<Self> {
        Self::new(f, 0.0)
    }

    pub fn calibration_matrix(&self) -> Mat3 {
        Mat3::from_diagonal(&Vec3::new(self.f, self.f, 1.0))
    }

    pub fn inverse_calibration_matrix(&self) -> Mat3 {
        Mat3::from_diagonal(&Vec3::new(1.0 / self.f, 1.0 / self.f, 1.0))
    }
}

/// World-to-camera rotation reported by the IMU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GravityRotation(Rotation3<f64>);

impl GravityRotation {
    pub fn identity() -> Self {
        Self(Rotation3::identity())
    }

    /// Validates orthonormality (1e-9) and a positive determinant.
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        let gram = m.transpose() * m - Mat3::identity();
        if gram.amax() > 1e-9 {
            return Err(Error::InvalidRotation(format!(
                "matrix is not orthonormal (max |R^T R - I| = {:.3e})",
                gram.amax()
            )));
        }
        if m.determinant() <= 0.0 {
            return Err(Error::InvalidRotation("determinant is not +1".into()));
        }
        Ok(Self(Rotation3::from_matrix_unchecked(m)))
    }

    /// Hamilton quaternion `(w, x, y, z)`. The norm must be within
    /// [`QUATERNION_NORM_TOLERANCE`] of one; it is renormalized afterwards.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let q = nalgebra::Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
            return Err(Error::InvalidRotation(format!(
                "quaternion norm {norm} deviates from 1 by more than {QUATERNION_NORM_TOLERANCE}"
            )));
        }
        Ok(Self(UnitQuaternion::from_quaternion(q).to_rotation_matrix()))
    }

    /// Rotation by `angle` radians about the gravity (`y`) axis.
    pub fn about_gravity(angle: f64) -> Self {
        Self(Rotation3::from_axis_angle(&Vec3::y_axis(), angle))
    }

    pub fn from_rotation(r: Rotation3<f64>) -> Self {
        Self(r)
    }

    pub fn rotation(&self) -> &Rotation3<f64> {
        &self.0
    }

    pub fn matrix(&self) -> Mat3 {
        *self.0.matrix()
    }

    /// Hamilton quaternion `[w, x, y, z]`.
    pub fn quaternion(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_rotation_matrix(&self.0);
        [q.w, q.i, q.j, q.k]
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.inverse())
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self(self.0 * other.0)
    }

    /// Unit normal of the ground plane expressed in this camera's frame,
    /// i.e. the second column of the matrix.
    pub fn plane_normal_in_camera(&self) -> Vec3 {
        self.matrix().column(1).into_owned()
    }
}

/// One point match between two frames with the IMU rotations of both frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub p1: ImagePoint,
    pub p2: ImagePoint,
    pub r1: GravityRotation,
    pub r2: GravityRotation,
}

impl Correspondence {
    pub fn new(p1: ImagePoint, p2: ImagePoint, r1: GravityRotation, r2: GravityRotation) -> Self {
        Self { p1, p2, r1, r2 }
    }

    /// Gravity-aligned rays of both points under `intr`, i.e.
    /// `R_j^T K^-1 phi(x_j, lambda)`.
    pub fn aligned_rays(&self, intr: &Intrinsics) -> (Vec3, Vec3) {
        let k_inv = intr.inverse_calibration_matrix();
        let a = self.r1.matrix().transpose() * k_inv * distort_div(self.p1.to_vec(), intr.lambda);
        let b = self.r2.matrix().transpose() * k_inv * distort_div(self.p2.to_vec(), intr.lambda);
        (a, b)
    }
}

/// The three free entries of the gravity-aligned homography
///
/// ```text
///       [ 1  h1  0 ]
/// H_y = [ 0  h2  0 ]
///       [ 0  h3  1 ]
/// ```
///
/// with the plane distance fixed to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionHomography {
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
}

impl MotionHomography {
    pub fn new(h1: f64, h2: f64, h3: f64) -> Self {
        Self { h1, h2, h3 }
    }

    /// Checked constructor enforcing finiteness and `h2 != 0` (`det H_y = h2`).
    pub fn try_new(h1: f64, h2: f64, h3: f64) -> Result<Self> {
        let hy = Self::new(h1, h2, h3);
        if !hy.is_valid() {
            return Err(Error::DegenerateConfiguration(format!(
                "motion homography ({h1}, {h2}, {h3}) is not invertible"
            )));
        }
        Ok(hy)
    }

    pub fn identity() -> Self {
        Self::new(0.0, 1.0, 0.0)
    }

    /// `H_y = I + t n^T` for a translation `t` with `n = [0, 1, 0]`.
    pub fn from_translation(t: &Vec3) -> Self {
        Self::new(t.x, 1.0 + t.y, t.z)
    }

    pub fn translation(&self) -> Vec3 {
        Vec3::new(self.h1, self.h2 - 1.0, self.h3)
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(1.0, self.h1, 0.0, 0.0, self.h2, 0.0, 0.0, self.h3, 1.0)
    }

    pub fn is_valid(&self) -> bool {
        self.h1.is_finite()
            && self.h2.is_finite()
            && self.h3.is_finite()
            && self.h2.abs() > NORMALIZATION_EPS
    }
}

/// Relative rotation and unit translation direction between the two views.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativePose {
    pub rotation: GravityRotation,
    pub translation_dir: Vec3,
}

/// Image dimensions defining the pixel <-> normalized coordinate map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageFrame {
    pub width: f64,
    pub height: f64,
}

impl ImageFrame {
    pub fn new(width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "image size {width}x{height} must be positive"
            )));
        }
        Ok(Self { width, height })
    }

    /// Pixels per normalized unit: half the image diagonal.
    pub fn scale(&self) -> f64 {
        0.5 * self.width.hypot(self.height)
    }

    /// Half extents of the image in normalized units.
    pub fn half_extent(&self) -> Vec2 {
        Vec2::new(self.width, self.height) * (0.5 / self.scale())
    }

    /// Distortion-centered pixel coordinates to normalized units.
    pub fn normalize(&self, px: Vec2) -> ImagePoint {
        ImagePoint::from_vec(px / self.scale())
    }

    pub fn to_pixels(&self, p: ImagePoint) -> Vec2 {
        p.to_vec() * self.scale()
    }

    pub fn contains(&self, p: ImagePoint) -> bool {
        let e = self.half_extent();
        p.x.abs() <= e.x && p.y.abs() <= e.y
    }
}

impl Default for ImageFrame {
    fn default() -> Self {
        Self {
            width: 640.0,
            height: 480.0,
        }
    }
}

/// Division model: `[x, y, 1 + lambda (x^2 + y^2)]` for a measured point.
pub fn distort_div(p: Vec2, lambda: f64) -> Vec3 {
    Vec3::new(p.x, p.y, 1.0 + lambda * p.norm_squared())
}

/// Undistorted (pinhole) coordinates of a measured point.
pub fn undistort(p: ImagePoint, lambda: f64) -> Result<Vec2> {
    let h = distort_div(p.to_vec(), lambda);
    if h.z <= 0.0 {
        return Err(Error::NoRealRoot { discriminant: h.z });
    }
    Ok(Vec2::new(h.x / h.z, h.y / h.z))
}

/// Inverse of the division model: the measured point whose undistorted image
/// is `p_undistorted`.
///
/// Solves `lambda r_u r_d^2 - r_d + r_u = 0` for the root that tends to
/// `r_d = r_u` as `lambda -> 0`, written in the cancellation-free form
/// `r_d = 2 r_u / (1 + sqrt(1 - 4 lambda r_u^2))`.
pub fn redistort(p_undistorted: Vec2, lambda: f64) -> Result<ImagePoint> {
    let r_u2 = p_undistorted.norm_squared();
    let discriminant = 1.0 - 4.0 * lambda * r_u2;
    if discriminant < 0.0 || !discriminant.is_finite() {
        return Err(Error::NoRealRoot { discriminant });
    }
    // r_d / r_u
    let ratio = 2.0 / (1.0 + discriminant.sqrt());
    Ok(ImagePoint::from_vec(p_undistorted * ratio))
}

/// `R^T K^-1 [x, y, 1]`.
pub fn align_point(p: ImagePoint, r: &GravityRotation, intr: &Intrinsics) -> Vec3 {
    r.matrix().transpose() * intr.inverse_calibration_matrix() * p.homogeneous()
}

/// Divides by `h33`.
pub fn normalize_h33(h: &Mat3) -> Result<Mat3> {
    let h33 = h[(2, 2)];
    if !(h33.abs() >= NORMALIZATION_EPS) {
        return Err(Error::NormalizationFailure(h33.abs()));
    }
    Ok(h / h33)
}

/// Image-space homography `H ~ K R2 H_y R1^T K^-1`, normalized to `h33 = 1`.
pub fn compose_homography(
    hy: &MotionHomography,
    r1: &GravityRotation,
    r2: &GravityRotation,
    intr: &Intrinsics,
) -> Result<Mat3> {
    let h = intr.calibration_matrix()
        * r2.matrix()
        * hy.matrix()
        * r1.matrix().transpose()
        * intr.inverse_calibration_matrix();
    normalize_h33(&h)
}

/// Recovers `H_y ~ R2^T K^-1 H K R1` from an image-space homography.
///
/// The scale is fixed by the two unit diagonal entries of `H_y`; the
/// remaining zero entries are not checked.
pub fn decompose_homography(
    h: &Mat3,
    r1: &GravityRotation,
    r2: &GravityRotation,
    intr: &Intrinsics,
) -> Result<MotionHomography> {
    let m = r2.matrix().transpose()
        * intr.inverse_calibration_matrix()
        * h
        * intr.calibration_matrix()
        * r1.matrix();
    let scale = 0.5 * (m[(0, 0)] + m[(2, 2)]);
    if !(scale.abs() >= NORMALIZATION_EPS) {
        return Err(Error::NormalizationFailure(scale.abs()));
    }
    Ok(MotionHomography::new(
        m[(0, 1)] / scale,
        m[(1, 1)] / scale,
        m[(2, 1)] / scale,
    ))
}

/// Relative pose: `R_rel = R2 R1^T`, `t_rel ~ R2 t` with `t = [h1, h2 - 1, h3]`.
pub fn extract_pose(
    hy: &MotionHomography,
    r1: &GravityRotation,
    r2: &GravityRotation,
) -> Result<RelativePose> {
    let t = hy.translation();
    let norm = t.norm();
    if !(norm >= ZERO_TRANSLATION_EPS) {
        return Err(Error::ZeroTranslation(norm));
    }
    let t_rel = r2.matrix() * t;
    Ok(RelativePose {
        rotation: r2.compose(&r1.transpose()),
        translation_dir: t_rel / t_rel.norm(),
    })
}

/// Relative Frobenius distance of two homographies after `h33` normalization.
pub fn homography_error(h_est: &Mat3, h_gt: &Mat3) -> Result<f64> {
    let est = normalize_h33(h_est)?;
    let gt = normalize_h33(h_gt)?;
    Ok((est - gt).norm() / gt.norm())
}

/// Relative pose and focal length errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseErrors {
    /// Rotation angle of `R_gt R_est^T`, radians.
    pub rotation: f64,
    /// Angle between translation directions folded to `[0, pi/2]`, radians.
    pub translation: f64,
    /// `|f_gt - f_est| / f_gt`.
    pub focal: f64,
    /// Set when an arccos argument had to be clamped by more than 1e-9.
    pub clamped: bool,
}

fn clamped_acos(x: f64, clamped: &mut bool) -> f64 {
    if x.abs() > 1.0 + 1e-9 {
        *clamped = true;
    }
    x.clamp(-1.0, 1.0).acos()
}

/// Rotation angle between two rotations, radians.
pub fn rotation_error(r_est: &GravityRotation, r_gt: &GravityRotation) -> f64 {
    let mut clamped = false;
    let m = r_gt.matrix() * r_est.matrix().transpose();
    clamped_acos((m.trace() - 1.0) / 2.0, &mut clamped)
}

pub fn pose_errors(est: &RelativePose, f_est: f64, gt: &RelativePose, f_gt: f64) -> PoseErrors {
    let mut clamped = false;
    let m = gt.rotation.matrix() * est.rotation.matrix().transpose();
    let rotation = clamped_acos((m.trace() - 1.0) / 2.0, &mut clamped);
    let cos_t = gt.translation_dir.dot(&est.translation_dir)
        / (gt.translation_dir.norm() * est.translation_dir.norm());
    let translation = clamped_acos(cos_t.abs(), &mut clamped);
    PoseErrors {
        rotation,
        translation,
        focal: (f_gt - f_est).abs() / f_gt,
        clamped,
    }
}

/// Relative distortion error; absolute when the ground truth is exactly zero.
pub fn lambda_error(lambda_est: f64, lambda_gt: f64) -> f64 {
    let diff = (lambda_gt - lambda_est).abs();
    if lambda_gt == 0.0 {
        diff
    } else {
        diff / lambda_gt.abs()
    }
}
