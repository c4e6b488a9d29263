//! Synthetic scenes: a ground plane seen by two gravity-aware cameras.
//!
//! The world `y` axis points down along gravity and the plane is `y = 1`
//! relative to the first camera center. Cameras look roughly down with
//! bounded pitch and roll and arbitrary heading. Measurements are produced
//! in the distorted image by inverting the division model.

use nalgebra::{Rotation3, Vector2};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    compose_homography, extract_pose, redistort, undistort, Correspondence, GravityRotation,
    ImageFrame, ImagePoint, Intrinsics, Mat3, MotionHomography, RelativePose, Vec3,
};

pub mod experiments;

pub use experiments::*;

/// Scene sampling parameters. `None` intrinsics are drawn from the ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub n_points: usize,
    pub f_gt: Option<f64>,
    pub lambda_gt: Option<f64>,
    pub f_range: (f64, f64),
    pub lambda_range: (f64, f64),
    /// Camera baseline length relative to the plane distance.
    pub translation_range: (f64, f64),
    pub max_tilt_deg: f64,
    pub max_yaw_deg: f64,
    /// Gaussian noise on both measured points, pixels.
    pub noise_sigma_px: f64,
    /// Share of correspondences whose second point is replaced by a uniform
    /// point in the image.
    pub outlier_fraction: f64,
    /// Heading error added to the reported second rotation, degrees.
    pub yaw_drift_deg: f64,
    pub frame: ImageFrame,
    pub seed: u64,
    /// Scene resamples before giving up.
    pub max_attempts: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_points: 100,
            f_gt: None,
            lambda_gt: None,
            f_range: (0.5, 2.5),
            lambda_range: (-0.6, 0.0),
            translation_range: (0.05, 0.5),
            max_tilt_deg: 30.0,
            max_yaw_deg: 180.0,
            noise_sigma_px: 0.0,
            outlier_fraction: 0.0,
            yaw_drift_deg: 0.0,
            frame: ImageFrame::default(),
            seed: 0,
            max_attempts: 100,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if let Some(f) = self.f_gt {
            if !(f > 0.0 && f.is_finite()) {
                return bad(format!("focal length must be positive, got {f}"));
            }
        }
        if !(self.f_range.0 > 0.0 && self.f_range.0 <= self.f_range.1) {
            return bad(format!("invalid focal range {:?}", self.f_range));
        }
        if !(self.lambda_range.0 <= self.lambda_range.1) {
            return bad(format!("invalid distortion range {:?}", self.lambda_range));
        }
        if !(self.translation_range.0 > 0.0
            && self.translation_range.0 <= self.translation_range.1
            && self.translation_range.1 < 1.0)
        {
            return bad(format!(
                "translation range {:?} must lie in (0, 1)",
                self.translation_range
            ));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return bad(format!(
                "outlier fraction must lie in [0, 1), got {}",
                self.outlier_fraction
            ));
        }
        if !(self.noise_sigma_px >= 0.0 && self.noise_sigma_px.is_finite()) {
            return bad(format!("noise sigma must be >= 0, got {}", self.noise_sigma_px));
        }
        Ok(())
    }
}

/// A generated scene with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInstance {
    /// Measurements with the reported (possibly drifted) rotations.
    pub correspondences: Vec<Correspondence>,
    /// Noise-free measurements of the same plane points.
    pub clean: Vec<(ImagePoint, ImagePoint)>,
    pub inlier: Vec<bool>,
    pub r1: GravityRotation,
    pub r2: GravityRotation,
    pub hy: MotionHomography,
    /// Image-space homography, `h33 = 1`.
    pub h: Mat3,
    pub pose: RelativePose,
    pub intrinsics: Intrinsics,
    pub frame: ImageFrame,
}

impl SyntheticInstance {
    pub fn outlier_count(&self) -> usize {
        self.inlier.iter().filter(|&&b| !b).count()
    }
}

/// RNG for instance `index` of an experiment seeded with `seed`.
pub fn instance_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Camera looking straight down: optical axis along gravity, image `y` along
/// world `-z`.
pub fn downward() -> GravityRotation {
    GravityRotation::from_matrix(Mat3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0))
        .expect("orthonormal")
}

/// Downward camera with heading `yaw` and then `pitch`/`roll` about the camera
/// `x`/`y` axes, radians.
pub fn camera_rotation(pitch: f64, roll: f64, yaw: f64) -> GravityRotation {
    let tilt = Rotation3::from_euler_angles(pitch, roll, 0.0);
    GravityRotation::from_rotation(tilt)
        .compose(&downward())
        .compose(&GravityRotation::about_gravity(yaw))
}

fn uniform_sym(rng: &mut impl Rng, half: f64) -> f64 {
    if half > 0.0 {
        rng.random_range(-half..=half)
    } else {
        0.0
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo < hi {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn random_rotation(rng: &mut impl Rng, config: &SceneConfig) -> GravityRotation {
    let tilt = config.max_tilt_deg.to_radians();
    let pitch = uniform_sym(rng, tilt);
    let roll = uniform_sym(rng, tilt);
    let yaw = uniform_sym(rng, config.max_yaw_deg.to_radians());
    camera_rotation(pitch, roll, yaw)
}

fn random_image_point(rng: &mut impl Rng, frame: &ImageFrame) -> ImagePoint {
    let e = frame.half_extent();
    ImagePoint::new(uniform_sym(rng, e.x), uniform_sym(rng, e.y))
}

/// Projects a camera-frame point through `K` and the inverse division model.
pub fn project_point(c: Vec3, intr: &Intrinsics) -> Option<ImagePoint> {
    if !(c.z > 1e-9) {
        return None;
    }
    redistort(Vector2::new(intr.f * c.x / c.z, intr.f * c.y / c.z), intr.lambda).ok()
}

/// Ground point (relative to camera 1) seen at measured point `p`.
fn back_project(p: ImagePoint, r1: &GravityRotation, intr: &Intrinsics) -> Option<Vec3> {
    let u = undistort(p, intr.lambda).ok()?;
    let a = r1.matrix().transpose() * Vec3::new(u.x / intr.f, u.y / intr.f, 1.0);
    if !(a.y > 1e-9) {
        return None;
    }
    Some(a / a.y)
}

/// Noise-free point pairs, or `None` if the pose does not see enough of the
/// plane in both views.
fn sample_points(
    rng: &mut impl Rng,
    n: usize,
    r1: &GravityRotation,
    r2: &GravityRotation,
    t: &Vec3,
    intr: &Intrinsics,
    frame: &ImageFrame,
) -> Option<Vec<(ImagePoint, ImagePoint)>> {
    let mut out = Vec::with_capacity(n);
    let mut tries = 0;
    while out.len() < n {
        tries += 1;
        if tries > 50 * n + 100 {
            return None;
        }
        let p1 = random_image_point(rng, frame);
        let Some(x) = back_project(p1, r1, intr) else { continue };
        let Some(p2) = project_point(r2.matrix() * (x + t), intr) else { continue };
        if frame.contains(p2) {
            out.push((p1, p2));
        }
    }
    Some(out)
}

/// Generates an instance seeded by `config.seed`.
pub fn generate(config: &SceneConfig) -> Result<SyntheticInstance> {
    generate_with_rng(config, &mut ChaCha8Rng::seed_from_u64(config.seed))
}

/// Generates an instance from an explicit RNG.
///
/// Draw order is fixed: intrinsics, poses, points, then noise, outliers.
/// Instances that differ only in noise level, outlier fraction or drift
/// therefore share their geometry.
pub fn generate_with_rng<R: RngCore>(config: &SceneConfig, rng: &mut R) -> Result<SyntheticInstance> {
    config.validate()?;
    let f = config.f_gt.unwrap_or_else(|| uniform(rng, config.f_range));
    let lambda = config.lambda_gt.unwrap_or_else(|| uniform(rng, config.lambda_range));
    let intr = Intrinsics::new(f, lambda)?;
    let frame = config.frame;

    let mut scene = None;
    for _ in 0..config.max_attempts.max(1) {
        let r1 = random_rotation(rng, config);
        let r2 = random_rotation(rng, config);
        let dir: [f64; 3] = UnitSphere.sample(rng);
        let t = Vec3::from(dir) * uniform(rng, config.translation_range);
        if let Some(points) = sample_points(rng, config.n_points, &r1, &r2, &t, &intr, &frame) {
            scene = Some((r1, r2, t, points));
            break;
        }
    }
    let (r1, r2, t, clean) = scene.ok_or(Error::GenerationFailure(config.max_attempts))?;

    let sigma = config.noise_sigma_px / frame.scale();
    let mut noisy: Vec<(ImagePoint, ImagePoint)> = clean
        .iter()
        .map(|(p1, p2)| {
            let mut n = [0.0; 4];
            for v in &mut n {
                let z: f64 = StandardNormal.sample(rng);
                *v = sigma * z;
            }
            (
                ImagePoint::new(p1.x + n[0], p1.y + n[1]),
                ImagePoint::new(p2.x + n[2], p2.y + n[3]),
            )
        })
        .collect();

    let n_out = (config.outlier_fraction * config.n_points as f64).floor() as usize;
    let mut inlier = vec![true; config.n_points];
    for i in rand::seq::index::sample(rng, config.n_points, n_out) {
        inlier[i] = false;
        noisy[i].1 = random_image_point(rng, &frame);
    }

    let reported_r2 = r2.compose(&GravityRotation::about_gravity(config.yaw_drift_deg.to_radians()));
    let correspondences = noisy
        .iter()
        .map(|&(p1, p2)| Correspondence::new(p1, p2, r1, reported_r2))
        .collect();

    let hy = MotionHomography::from_translation(&t);
    Ok(SyntheticInstance {
        correspondences,
        clean,
        inlier,
        r1,
        r2,
        hy,
        h: compose_homography(&hy, &r1, &r2, &intr)?,
        pose: extract_pose(&hy, &r1, &r2)?,
        intrinsics: intr,
        frame,
    })
}
