//! Relative pose from a ground plane seen by two gravity-aware cameras.
//!
//! With the IMU rotations known, the plane-induced homography reduces to three
//! unknowns (see [`MotionHomography`]), which minimal solvers recover from 1.5
//! to 2.5 point correspondences, optionally with an unknown focal length and
//! radial distortion. [`ransac`] wraps the solvers in a locally optimized
//! robust estimator and [`synth`] generates the synthetic benchmarks.

// `!(x > t)` is used on purpose so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod io;
pub mod poly;
pub mod ransac;
pub mod solvers;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{
    Correspondence, GravityRotation, ImageFrame, ImagePoint, Intrinsics, MotionHomography,
    PoseErrors, RelativePose,
};
pub use ransac::{run_ransac, RansacConfig, RansacReport};
pub use solvers::{SolverKind, SolverSolution};
pub use synth::{generate, SceneConfig, SyntheticInstance};
