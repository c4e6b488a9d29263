//! Unknown common focal length, 2 points.
//!
//! With `K^-1 ~ diag(1, 1, w)` and `w = f`, the aligned rays are affine in `w`:
//! `a(w) = R1^T [x, y, 0] + w R1^T e3`. Rows 1 and 3 of `b x H_y a = 0`,
//! written homogeneously in `v = [h1, h2, h3, 1]`, give a 4x4 matrix `M(w)`
//! with quadratic entries. `det M(w)` has formal degree 8 but its two leading
//! coefficients vanish identically (the `w^2` parts of the rows only depend on
//! the optical axes, which both correspondences share), leaving a sextic.
//!
//! Roots where the row pair loses rank for reasons unrelated to the motion
//! (`a_y = 0`, `b_y = 0` style factors) show up as null vectors with a zero
//! last entry or with `h2 = 0` and are discarded.

use super::{transfer_residual, SolverKind, SolverSolution, MIN_FOCAL};
use crate::error::{Error, Result};
use crate::geometry::{Correspondence, GravityRotation, Intrinsics, MotionHomography, Vec3};
use crate::poly::{det_polymatrix, nullspace_min, real_roots, PolyMatrix, UniPoly};

/// Degree of the determinant after dropping the structurally zero terms.
pub const SEXTIC_DEGREE: usize = 6;
/// Newton step tolerance for the sextic roots.
pub const ROOT_TOLERANCE: f64 = 1e-14;
/// Relative size of the last null vector entry below which a root is spurious.
pub const HOMOGENEOUS_TOLERANCE: f64 = 1e-8;
/// Both correspondences must satisfy their full cross-product constraint to
/// this (sine) residual.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-6;
/// Hypotheses with a shorter translation are rejected.
pub const MIN_TRANSLATION: f64 = 1e-9;
/// `det M(w)` counts as identically zero below this, relative to the product
/// of the row magnitudes.
pub const DEGENERATE_TOLERANCE: f64 = 1e-11;

/// Solutions plus root bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct FhfReport {
    pub solutions: Vec<SolverSolution>,
    /// Real roots of the sextic, before any filtering.
    pub real_roots: Vec<f64>,
    /// Real roots rejected as spurious or inadmissible.
    pub rejected: usize,
    pub sextic: UniPoly,
}

/// Ray as `(constant part, w part)`.
fn affine_ray(p: &crate::geometry::ImagePoint, r: &GravityRotation) -> (Vec3, Vec3) {
    let rt = r.matrix().transpose();
    (rt * Vec3::new(p.x, p.y, 0.0), rt.column(2).into_owned())
}

fn component(ray: &(Vec3, Vec3), i: usize) -> UniPoly {
    UniPoly::linear(ray.0[i], ray.1[i])
}

/// The 4x4 polynomial matrix `M(w)`, two rows per correspondence.
pub fn build_fhf_matrix(corrs: &[Correspondence; 2]) -> PolyMatrix {
    let mut rows = Vec::with_capacity(4);
    for c in corrs {
        let ra = affine_ray(&c.p1, &c.r1);
        let rb = affine_ray(&c.p2, &c.r2);
        let a: Vec<UniPoly> = (0..3).map(|i| component(&ra, i)).collect();
        let b: Vec<UniPoly> = (0..3).map(|i| component(&rb, i)).collect();
        let z = UniPoly::zero();
        // b x (H_y a), rows 1 and 3.
        rows.push(vec![
            z.clone(),
            -&(&b[2] * &a[1]),
            &b[1] * &a[1],
            &b[1] * &a[2],
        ]);
        rows.push(vec![
            -&(&b[1] * &a[1]),
            &b[0] * &a[1],
            z,
            -&(&b[1] * &a[0]),
        ]);
    }
    PolyMatrix::from_rows(rows).expect("4x4 by construction")
}

/// Sextic whose positive roots contain every admissible `f`.
pub fn fhf_sextic(m: &PolyMatrix) -> Result<UniPoly> {
    Ok(det_polymatrix(m)?.truncated(SEXTIC_DEGREE))
}

fn row_scale(m: &PolyMatrix) -> f64 {
    (0..m.nrows())
        .map(|r| {
            (0..m.ncols())
                .map(|c| m.get(r, c).max_abs_coeff())
                .fold(0.0, f64::max)
        })
        .product()
}

/// Up to four `(H_y, f)` hypotheses from two undistorted correspondences.
///
/// Fails with [`Error::NoSolution`] when every real root is rejected.
pub fn solve_fhf(corrs: &[Correspondence; 2]) -> Result<Vec<SolverSolution>> {
    let sols = solve_fhf_detailed(corrs)?.solutions;
    if sols.is_empty() {
        return Err(Error::NoSolution);
    }
    Ok(sols)
}

/// [`solve_fhf`] with root statistics.
pub fn solve_fhf_detailed(corrs: &[Correspondence; 2]) -> Result<FhfReport> {
    let m = build_fhf_matrix(corrs);
    let sextic = fhf_sextic(&m)?;
    let scale = row_scale(&m);
    if !(sextic.max_abs_coeff() > DEGENERATE_TOLERANCE * scale) {
        return Err(Error::DegenerateConfiguration(
            "det M(w) vanishes identically".into(),
        ));
    }
    let roots = real_roots(&sextic, ROOT_TOLERANCE)?;

    let mut solutions = Vec::new();
    let mut rejected = 0;
    for &w in &roots {
        match candidate(&m, w, corrs) {
            Some(sol) => solutions.push(sol),
            None => rejected += 1,
        }
    }
    Ok(FhfReport {
        solutions,
        real_roots: roots,
        rejected,
        sextic,
    })
}

fn candidate(m: &PolyMatrix, w: f64, corrs: &[Correspondence; 2]) -> Option<SolverSolution> {
    if !(w > MIN_FOCAL) {
        return None;
    }
    let (v, _) = nullspace_min(&m.eval(w));
    if v[3].abs() < HOMOGENEOUS_TOLERANCE * v.norm() {
        return None;
    }
    let hy = MotionHomography::try_new(v[0] / v[3], v[1] / v[3], v[2] / v[3]).ok()?;
    // Without translation the plane and hence the motion is unobservable.
    if hy.translation().norm() < MIN_TRANSLATION {
        return None;
    }
    let intr = Intrinsics { f: w, lambda: 0.0 };
    if corrs
        .iter()
        .any(|c| !(transfer_residual(c, &hy, &intr) <= CONSISTENCY_TOLERANCE))
    {
        return None;
    }
    Some(SolverSolution {
        hy,
        f: w,
        lambda: 0.0,
        held_out_residual: None,
        tag: SolverKind::Fhf,
    })
}
