//! Calibrated solver: known `f` and `lambda`, three unknowns from 1.5 points.
//!
//! Each correspondence gives the cross-product constraint `b x H_y a = 0` on
//! the aligned rays. Dividing by `a_y b_y` the first and third rows become
//! linear with unit coefficients on `h3` and `h1`:
//!
//! ```text
//! row 1:  -b3 h2 + h3 = -a3
//! row 3:  -h1 + b1 h2 =  a1        (a = a/a_y, b = b/b_y)
//! ```
//!
//! The first correspondence contributes both rows, the second one row; the
//! other row of the second correspondence is held out.

use nalgebra::{Matrix3, Vector3};

use super::{transfer_residual, SolverKind, SolverSolution};
use crate::error::{Error, Result};
use crate::geometry::{Correspondence, Intrinsics, MotionHomography, Vec3};

/// Relative determinant below which the 3x3 system is rejected.
pub const DET_TOLERANCE: f64 = 1e-12;

fn dehomogenize_y(v: Vec3) -> Option<Vec3> {
    if v.y.abs() <= 1e-12 * v.norm() {
        None
    } else {
        Some(v / v.y)
    }
}

/// `(coefficients, rhs)` of rows 1 and 3 for one correspondence.
fn rows(corr: &Correspondence, intr: &Intrinsics) -> Result<[(Vector3<f64>, f64); 2]> {
    let (a, b) = corr.aligned_rays(intr);
    let (a, b) = match (dehomogenize_y(a), dehomogenize_y(b)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::DegenerateConfiguration(
                "ray parallel to the ground plane".into(),
            ))
        }
    };
    Ok([
        (Vector3::new(0.0, -b.z, 1.0), -a.z),
        (Vector3::new(-1.0, b.x, 0.0), a.x),
    ])
}

/// Unique `H_y` from two correspondences with known intrinsics.
///
/// The row of the second correspondence that yields the better conditioned
/// system is used; the full second correspondence then provides
/// [`SolverSolution::held_out_residual`].
pub fn solve_calibrated(corrs: &[Correspondence; 2], intr: &Intrinsics) -> Result<SolverSolution> {
    let [r1, r3] = rows(&corrs[0], intr)?;
    let second = rows(&corrs[1], intr)?;

    let mut best: Option<(Matrix3<f64>, Vector3<f64>, f64)> = None;
    for extra in second {
        let a = Matrix3::from_rows(&[r1.0.transpose(), r3.0.transpose(), extra.0.transpose()]);
        let rhs = Vector3::new(r1.1, r3.1, extra.1);
        let rel = a.determinant().abs() / a.norm().powi(3);
        if best.as_ref().is_none_or(|b| rel > b.2) {
            best = Some((a, rhs, rel));
        }
    }
    let (a, rhs, rel) = best.expect("two candidate rows");
    if !(rel >= DET_TOLERANCE) {
        return Err(Error::DegenerateConfiguration(format!(
            "calibrated system is singular (relative determinant {rel:.3e})"
        )));
    }
    let h = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::DegenerateConfiguration("calibrated system is singular".into()))?;
    let hy = MotionHomography::try_new(h.x, h.y, h.z)?;
    Ok(SolverSolution {
        hy,
        f: intr.f,
        lambda: intr.lambda,
        held_out_residual: Some(transfer_residual(&corrs[1], &hy, intr)),
        tag: SolverKind::Calibrated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GravityRotation, ImagePoint};

    fn ground_corr(x: f64, z: f64, t: Vec3, f: f64) -> Correspondence {
        // Cameras looking straight down: the world y axis is the optical axis.
        let down = GravityRotation::from_matrix(Matrix3::new(
            1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0,
        ))
        .unwrap();
        let x1 = Vec3::new(x, 1.0, z);
        let x2 = x1 + t;
        let project = |v: Vec3| {
            let c = down.matrix() * v;
            ImagePoint::new(f * c.x / c.z, f * c.y / c.z)
        };
        Correspondence::new(project(x1), project(x2), down, down)
    }

    #[test]
    fn identity_motion_gives_identity_homography() {
        let intr = Intrinsics::pinhole(1.0).unwrap();
        let c1 = ground_corr(0.2, -0.1, Vec3::zeros(), 1.0);
        let c2 = ground_corr(-0.3, 0.25, Vec3::zeros(), 1.0);
        let sol = solve_calibrated(&[c1, c2], &intr).unwrap();
        assert!((sol.hy.h1).abs() < 1e-12);
        assert!((sol.hy.h2 - 1.0).abs() < 1e-12);
        assert!((sol.hy.h3).abs() < 1e-12);
        assert!(sol.held_out_residual.unwrap() < 1e-12);
    }

    #[test]
    fn recovers_translation() {
        let t = Vec3::new(0.1, -0.05, 0.2);
        let intr = Intrinsics::pinhole(1.3).unwrap();
        let c1 = ground_corr(0.2, -0.1, t, 1.3);
        let c2 = ground_corr(-0.3, 0.25, t, 1.3);
        let sol = solve_calibrated(&[c1, c2], &intr).unwrap();
        assert!((sol.hy.translation() - t).norm() < 1e-12);
        assert_eq!(sol.f, 1.3);
        assert_eq!(sol.tag, SolverKind::Calibrated);
    }

    #[test]
    fn duplicated_correspondence_is_degenerate() {
        let intr = Intrinsics::pinhole(1.0).unwrap();
        let c = ground_corr(0.2, -0.1, Vec3::new(0.1, 0.0, 0.0), 1.0);
        assert!(matches!(
            solve_calibrated(&[c, c], &intr),
            Err(Error::DegenerateConfiguration(_))
        ));
    }
}
