//! Minimal solvers for the gravity-aligned homography.
//!
//! | solver       | unknowns              | sample            | solutions |
//! |--------------|-----------------------|-------------------|-----------|
//! | [`calibrated`] | `h1, h2, h3`        | 1.5 points        | 1         |
//! | [`fhf`]      | `h1, h2, h3, f`       | 2 points          | <= 4      |
//! | [`frhfr`]    | `h1, h2, h3, f, lambda` | 2.5 points      | <= 3      |
//!
//! Samples are always passed as whole correspondences; the "half" point
//! contributes only part of its equations and the rest is held out to reject
//! false solutions, see [`HeldOutEquation`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    extract_pose, Correspondence, Intrinsics, MotionHomography, RelativePose,
};

pub mod calibrated;
pub mod fhf;
pub mod frhfr;

pub use calibrated::solve_calibrated;
pub use fhf::{solve_fhf, solve_fhf_detailed, FhfReport};
pub use frhfr::{build_frhfr_system, solve_frhfr, EliminatedSystem};

/// Focal lengths at or below this are treated as the saturated `f = 0`
/// component.
pub const MIN_FOCAL: f64 = 1e-6;
/// Default held-out residual bound for noise-free data.
pub const DEFAULT_FILTER_TOLERANCE: f64 = 1e-6;

/// Which minimal solver produced a hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[serde(rename = "calib")]
    Calibrated,
    Fhf,
    Frhfr,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [SolverKind::Calibrated, SolverKind::Fhf, SolverKind::Frhfr];

    /// Number of correspondences in a minimal sample.
    pub fn sample_size(self) -> usize {
        match self {
            SolverKind::Calibrated | SolverKind::Fhf => 2,
            SolverKind::Frhfr => 3,
        }
    }

    pub fn estimates_focal(self) -> bool {
        !matches!(self, SolverKind::Calibrated)
    }

    pub fn estimates_distortion(self) -> bool {
        matches!(self, SolverKind::Frhfr)
    }

    /// Upper bound on the number of returned hypotheses.
    pub fn max_solutions(self) -> usize {
        match self {
            SolverKind::Calibrated => 1,
            SolverKind::Fhf => 4,
            SolverKind::Frhfr => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Calibrated => "calib",
            SolverKind::Fhf => "fhf",
            SolverKind::Frhfr => "frhfr",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "calib" | "calibrated" => Ok(SolverKind::Calibrated),
            "fhf" => Ok(SolverKind::Fhf),
            "frhfr" => Ok(SolverKind::Frhfr),
            other => Err(Error::InvalidArgument(format!("unknown solver '{other}'"))),
        }
    }
}

/// One hypothesis `(H_y, f, lambda)`.
///
/// `f` and `lambda` are always populated: solvers that do not estimate them
/// copy the values they were given (see [`SolverKind::estimates_focal`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSolution {
    pub hy: MotionHomography,
    pub f: f64,
    pub lambda: f64,
    /// Residual of the equations not used to build the hypothesis; `None` for
    /// solvers that consume their whole sample.
    pub held_out_residual: Option<f64>,
    pub tag: SolverKind,
}

impl SolverSolution {
    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            f: self.f,
            lambda: self.lambda,
        }
    }

    pub fn pose(&self, corr: &Correspondence) -> Result<RelativePose> {
        extract_pose(&self.hy, &corr.r1, &corr.r2)
    }
}

/// Sine of the angle between the observed aligned ray of the second view and
/// the ray transferred from the first view. Zero iff both scalar DLT
/// equations of the correspondence hold.
pub fn transfer_residual(corr: &Correspondence, hy: &MotionHomography, intr: &Intrinsics) -> f64 {
    let (a, b) = corr.aligned_rays(intr);
    let z = hy.matrix() * a;
    let denom = b.norm() * z.norm();
    if denom == 0.0 || !denom.is_finite() {
        return f64::INFINITY;
    }
    b.cross(&z).norm() / denom
}

/// The DLT equation(s) of a correspondence that did not take part in
/// building a hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeldOutEquation {
    pub corr: Correspondence,
}

impl HeldOutEquation {
    pub fn new(corr: Correspondence) -> Self {
        Self { corr }
    }

    pub fn residual(&self, sol: &SolverSolution) -> f64 {
        transfer_residual(&self.corr, &sol.hy, &sol.intrinsics())
    }
}

/// Drops solutions whose held-out residual exceeds `tolerance`.
pub fn filter_by_unused_equation(
    sols: Vec<SolverSolution>,
    held_out: &HeldOutEquation,
    tolerance: f64,
) -> Vec<SolverSolution> {
    sols.into_iter()
        .filter(|s| held_out.residual(s) <= tolerance)
        .collect()
}

/// Runs the selected solver on a minimal sample.
///
/// `known` supplies the intrinsics a solver does not estimate: both for the
/// calibrated solver, `lambda` for fHf (points are undistorted with it before
/// solving). frHfr ignores it.
pub fn solve_minimal(
    kind: SolverKind,
    sample: &[Correspondence],
    known: &Intrinsics,
) -> Result<Vec<SolverSolution>> {
    if sample.len() < kind.sample_size() {
        return Err(Error::InsufficientData {
            needed: kind.sample_size(),
            got: sample.len(),
        });
    }
    match kind {
        SolverKind::Calibrated => {
            solve_calibrated(&[sample[0], sample[1]], known).map(|s| vec![s])
        }
        SolverKind::Fhf => {
            if known.lambda == 0.0 {
                solve_fhf(&[sample[0], sample[1]])
            } else {
                let u0 = undistort_correspondence(&sample[0], known.lambda)?;
                let u1 = undistort_correspondence(&sample[1], known.lambda)?;
                let mut sols = solve_fhf(&[u0, u1])?;
                for s in &mut sols {
                    s.lambda = known.lambda;
                }
                Ok(sols)
            }
        }
        SolverKind::Frhfr => solve_frhfr(&[sample[0], sample[1], sample[2]]),
    }
}

/// Replaces both measured points by their undistorted counterparts.
pub fn undistort_correspondence(corr: &Correspondence, lambda: f64) -> Result<Correspondence> {
    use crate::geometry::{undistort, ImagePoint};
    Ok(Correspondence {
        p1: ImagePoint::from_vec(undistort(corr.p1, lambda)?),
        p2: ImagePoint::from_vec(undistort(corr.p2, lambda)?),
        ..*corr
    })
}
