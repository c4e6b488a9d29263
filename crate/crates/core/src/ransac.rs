//! Time-budgeted LO-RANSAC over the minimal solvers.
//!
//! Hypotheses are scored by reprojection error measured in the distorted
//! (observed) image, in pixels. Every new best hypothesis is refined by
//! damped least squares over `h` and the estimated intrinsics with the IMU
//! rotations held fixed, and the final model gets one more refinement on its
//! consensus set.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    redistort, undistort, Correspondence, ImageFrame, Intrinsics, MotionHomography, Vec3,
};
use crate::solvers::{solve_minimal, SolverKind, SolverSolution, MIN_FOCAL};

/// Frame period at 30 fps.
pub const FRAME_BUDGET: Duration = Duration::from_micros(33_333);
/// Minimum consensus set size for [`lo_refine`].
pub const MIN_LO_INLIERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    /// Inlier threshold in pixels of the observed image.
    pub threshold_px: f64,
    pub max_iterations: Option<usize>,
    pub time_budget: Option<Duration>,
    /// Cap on damped least squares trials per refinement.
    pub lo_max_steps: usize,
    /// Refine every new best hypothesis (and the final model).
    pub lo_trigger: bool,
    /// Early-exit confidence for the `1 - (1 - w^m)^k` bound.
    pub confidence: f64,
    /// Average the forward and backward transfer errors.
    pub symmetric: bool,
    /// Hypotheses whose held-out residual exceeds this are skipped before
    /// scoring. Sine of an angle, see [`crate::solvers::transfer_residual`].
    pub held_out_tolerance: f64,
    /// Intrinsics for the quantities the solver does not estimate.
    pub known: Intrinsics,
    pub frame: ImageFrame,
    pub rng_seed: u64,
}

impl RansacConfig {
    /// Defaults: 33.3 ms budget, 20 LO steps, 0.99 confidence, one-sided
    /// scoring, 640x480 frame, `f = 1`, `lambda = 0`.
    pub fn new(threshold_px: f64) -> Self {
        let frame = ImageFrame::default();
        Self {
            threshold_px,
            max_iterations: None,
            time_budget: Some(FRAME_BUDGET),
            lo_max_steps: 20,
            lo_trigger: true,
            confidence: 0.99,
            symmetric: false,
            held_out_tolerance: 4.0 * threshold_px / frame.scale(),
            known: Intrinsics { f: 1.0, lambda: 0.0 },
            frame,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_px > 0.0 && self.threshold_px.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "threshold must be positive, got {}",
                self.threshold_px
            )));
        }
        if self.max_iterations.is_none() && self.time_budget.is_none() {
            return Err(Error::InvalidArgument(
                "either an iteration cap or a time budget is required".into(),
            ));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "confidence must lie in (0, 1), got {}",
                self.confidence
            )));
        }
        Ok(())
    }
}

/// Best-so-far inlier count after an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub time_s: f64,
    pub iteration: usize,
    pub inliers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RansacReport {
    pub best: SolverSolution,
    pub inlier_mask: Vec<bool>,
    pub inlier_count: usize,
    /// Inlier count of the best hypothesis before any refinement.
    pub pre_lo_inliers: usize,
    pub iterations: usize,
    pub lo_runs: usize,
    pub elapsed_s: f64,
    pub trace: Vec<TracePoint>,
}

fn project(ray: Vec3, intr: &Intrinsics) -> Option<Vector2<f64>> {
    if !(ray.z > 0.0) {
        return None;
    }
    let u = Vector2::new(intr.f * ray.x / ray.z, intr.f * ray.y / ray.z);
    redistort(u, intr.lambda).ok().map(|p| p.to_vec())
}

/// Predicted observation of `p1` in the second frame, normalized units.
fn transfer_forward(corr: &Correspondence, hy: &MotionHomography, intr: &Intrinsics) -> Option<Vector2<f64>> {
    let u = undistort(corr.p1, intr.lambda).ok()?;
    let a = corr.r1.matrix().transpose() * Vec3::new(u.x / intr.f, u.y / intr.f, 1.0);
    if !(a.y > 0.0) {
        // Ray does not meet the ground plane.
        return None;
    }
    project(corr.r2.matrix() * (hy.matrix() * a), intr)
}

/// Predicted observation of `p2` in the first frame.
fn transfer_backward(corr: &Correspondence, hy: &MotionHomography, intr: &Intrinsics) -> Option<Vector2<f64>> {
    let u = undistort(corr.p2, intr.lambda).ok()?;
    let b = corr.r2.matrix().transpose() * Vec3::new(u.x / intr.f, u.y / intr.f, 1.0);
    let inv = hy.matrix().try_inverse()?;
    if !(b.y * hy.h2 > 0.0) {
        return None;
    }
    project(corr.r1.matrix() * (inv * b), intr)
}

/// One-sided reprojection residual in pixels, `None` when unscoreable.
fn residual_px(corr: &Correspondence, sol: &SolverSolution, frame: &ImageFrame) -> Option<Vector2<f64>> {
    let pred = transfer_forward(corr, &sol.hy, &sol.intrinsics())?;
    Some((pred - corr.p2.to_vec()) * frame.scale())
}

/// Distance in pixels between `p2` and the transfer of `p1` through the model,
/// measured in the distorted image. `+inf` when the transfer is unscoreable
/// (behind a camera or outside the division model's range).
pub fn reprojection_error(corr: &Correspondence, sol: &SolverSolution, frame: &ImageFrame) -> f64 {
    residual_px(corr, sol, frame).map_or(f64::INFINITY, |r| r.norm())
}

/// Mean of the forward and backward reprojection errors.
pub fn symmetric_reprojection_error(corr: &Correspondence, sol: &SolverSolution, frame: &ImageFrame) -> f64 {
    let intr = sol.intrinsics();
    let back = transfer_backward(corr, &sol.hy, &intr)
        .map_or(f64::INFINITY, |p| (p - corr.p1.to_vec()).norm() * frame.scale());
    0.5 * (reprojection_error(corr, sol, frame) + back)
}

/// Parameter vector layout for refinement.
fn pack(sol: &SolverSolution) -> Vec<f64> {
    let mut p = vec![sol.hy.h1, sol.hy.h2, sol.hy.h3];
    if sol.tag.estimates_focal() {
        p.push(sol.f);
    }
    if sol.tag.estimates_distortion() {
        p.push(sol.lambda);
    }
    p
}

fn unpack(template: &SolverSolution, p: &[f64]) -> Option<SolverSolution> {
    let hy = MotionHomography::try_new(p[0], p[1], p[2]).ok()?;
    let mut sol = SolverSolution { hy, ..*template };
    if sol.tag.estimates_focal() {
        sol.f = p[3];
        if !(sol.f > MIN_FOCAL) {
            return None;
        }
    }
    if sol.tag.estimates_distortion() {
        sol.lambda = p[4];
    }
    if !p.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some(sol)
}

fn residual_vector(sol: &SolverSolution, corrs: &[Correspondence], frame: &ImageFrame) -> Option<DVector<f64>> {
    let mut r = DVector::zeros(2 * corrs.len());
    for (i, c) in corrs.iter().enumerate() {
        let e = residual_px(c, sol, frame)?;
        r[2 * i] = e.x;
        r[2 * i + 1] = e.y;
    }
    Some(r)
}

/// Summed squared one-sided reprojection error in px^2, `+inf` when any
/// correspondence is unscoreable.
pub fn cost_px(sol: &SolverSolution, corrs: &[Correspondence], frame: &ImageFrame) -> f64 {
    residual_vector(sol, corrs, frame).map_or(f64::INFINITY, |r| r.norm_squared())
}

/// Damped least squares on the summed squared reprojection error over
/// `(h1, h2, h3)` plus `f` and `lambda` when the solver estimates them.
///
/// Damping starts at 1e-3 and is multiplied by 10 after a rejected step and
/// divided by 10 after an accepted one; each trial counts towards
/// `max_steps`. Jacobians use forward differences with step
/// `1e-6 (1 + |p|)`. The returned model never has a higher cost than `sol`.
pub fn lo_refine(
    sol: &SolverSolution,
    inliers: &[Correspondence],
    frame: &ImageFrame,
    max_steps: usize,
) -> Result<SolverSolution> {
    if inliers.len() < MIN_LO_INLIERS {
        return Err(Error::InsufficientData {
            needed: MIN_LO_INLIERS,
            got: inliers.len(),
        });
    }
    let mut current = *sol;
    let Some(mut r) = residual_vector(&current, inliers, frame) else {
        return Ok(*sol);
    };
    let mut c = r.norm_squared();
    let mut p = pack(&current);
    let np = p.len();
    let mut damping = 1e-3;
    let mut jacobian: Option<DMatrix<f64>> = None;

    for _ in 0..max_steps {
        if c == 0.0 {
            break;
        }
        if jacobian.is_none() {
            let mut j = DMatrix::zeros(r.len(), np);
            for k in 0..np {
                let h = 1e-6 * (1.0 + p[k].abs());
                let mut q = p.clone();
                q[k] += h;
                let Some(rk) = unpack(&current, &q).and_then(|s| residual_vector(&s, inliers, frame))
                else {
                    return Ok(current);
                };
                j.set_column(k, &((rk - &r) / h));
            }
            jacobian = Some(j);
        }
        let j = jacobian.as_ref().expect("computed above");
        let jtj = j.transpose() * j;
        let g = j.transpose() * &r;
        let a = &jtj + DMatrix::identity(np, np) * damping;
        let Some(delta) = a.lu().solve(&(-g)) else {
            damping *= 10.0;
            continue;
        };
        let q: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
        let trial = unpack(&current, &q);
        let trial_r = trial.as_ref().and_then(|s| residual_vector(s, inliers, frame));
        match (trial, trial_r) {
            (Some(s), Some(tr)) if tr.norm_squared() < c => {
                let improvement = c - tr.norm_squared();
                current = s;
                p = q;
                r = tr;
                c = r.norm_squared();
                damping = (damping / 10.0).max(1e-12);
                jacobian = None;
                if improvement <= 1e-15 * (1.0 + c) {
                    break;
                }
            }
            _ => {
                damping *= 10.0;
                if damping > 1e12 {
                    break;
                }
            }
        }
    }
    Ok(current)
}

struct Score {
    inliers: usize,
    /// Sum of inlier errors, for tie-breaking.
    error: f64,
    mask: Vec<bool>,
}

fn score(sol: &SolverSolution, corrs: &[Correspondence], config: &RansacConfig) -> Score {
    let mut mask = vec![false; corrs.len()];
    let mut inliers = 0;
    let mut error = 0.0;
    for (m, c) in mask.iter_mut().zip(corrs) {
        let e = if config.symmetric {
            symmetric_reprojection_error(c, sol, &config.frame)
        } else {
            reprojection_error(c, sol, &config.frame)
        };
        if e < config.threshold_px {
            *m = true;
            inliers += 1;
            error += e;
        }
    }
    Score { inliers, error, mask }
}

fn better(a: &Score, b: &Score) -> bool {
    a.inliers > b.inliers || (a.inliers == b.inliers && a.error < b.error)
}

fn consensus(corrs: &[Correspondence], mask: &[bool]) -> Vec<Correspondence> {
    corrs
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(c, _)| *c)
        .collect()
}

/// Maximum refine/rescore rounds per local optimization.
const LO_ROUNDS: usize = 3;

/// Refines on the consensus set and rescores, repeating while the consensus
/// grows. Never returns fewer inliers than it was given.
fn refine_best(
    mut sol: SolverSolution,
    mut s: Score,
    corrs: &[Correspondence],
    config: &RansacConfig,
) -> (SolverSolution, Score) {
    for _ in 0..LO_ROUNDS {
        let set = consensus(corrs, &s.mask);
        let Ok(refined) = lo_refine(&sol, &set, &config.frame, config.lo_max_steps) else {
            break;
        };
        let rs = score(&refined, corrs, config);
        if rs.inliers < s.inliers {
            break;
        }
        let grew = rs.inliers > s.inliers;
        (sol, s) = (refined, rs);
        if !grew {
            break;
        }
    }
    (sol, s)
}

/// Iterations needed to draw one all-inlier sample with the configured
/// confidence, given the current inlier ratio.
pub fn required_iterations(inlier_ratio: f64, sample_size: usize, confidence: f64) -> usize {
    let good = inlier_ratio.powi(sample_size as i32);
    if good >= 1.0 {
        return 1;
    }
    if good <= 0.0 {
        return usize::MAX;
    }
    let k = (1.0 - confidence).ln() / (1.0 - good).ln();
    if k.is_finite() {
        k.ceil().max(1.0) as usize
    } else {
        usize::MAX
    }
}

/// Hypothesize-and-verify loop with local optimization.
pub fn run_ransac(corrs: &[Correspondence], kind: SolverKind, config: &RansacConfig) -> Result<RansacReport> {
    config.validate()?;
    let m = kind.sample_size();
    if corrs.len() < m {
        return Err(Error::InsufficientData {
            needed: m,
            got: corrs.len(),
        });
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut best: Option<(SolverSolution, Score)> = None;
    let mut pre_lo_inliers = 0;
    let mut trace = Vec::new();
    let mut lo_runs = 0;
    let mut required = usize::MAX;
    let mut iterations = 0;

    loop {
        if config.max_iterations.is_some_and(|cap| iterations >= cap)
            || config.time_budget.is_some_and(|b| start.elapsed() >= b)
            || iterations >= required
        {
            break;
        }
        iterations += 1;
        let idx = rand::seq::index::sample(&mut rng, corrs.len(), m);
        let sample: Vec<Correspondence> = idx.iter().map(|i| corrs[i]).collect();
        let Ok(sols) = solve_minimal(kind, &sample, &config.known) else {
            continue;
        };
        for sol in sols {
            if sol.held_out_residual.is_some_and(|r| !(r <= config.held_out_tolerance)) {
                continue;
            }
            let s = score(&sol, corrs, config);
            if best.as_ref().is_some_and(|(_, b)| !better(&s, b)) {
                continue;
            }
            pre_lo_inliers = pre_lo_inliers.max(s.inliers);
            let (sol, s) = if config.lo_trigger {
                lo_runs += 1;
                refine_best(sol, s, corrs, config)
            } else {
                (sol, s)
            };
            if best.as_ref().is_none_or(|(_, b)| better(&s, b)) {
                required = required_iterations(
                    s.inliers as f64 / corrs.len() as f64,
                    m,
                    config.confidence,
                );
                trace.push(TracePoint {
                    time_s: start.elapsed().as_secs_f64(),
                    iteration: iterations,
                    inliers: s.inliers,
                });
                best = Some((sol, s));
            }
        }
    }

    let (mut sol, mut s) = best.ok_or(Error::NoModelFound)?;
    if config.lo_trigger {
        lo_runs += 1;
        let before = s.inliers;
        (sol, s) = refine_best(sol, s, corrs, config);
        if s.inliers > before {
            trace.push(TracePoint {
                time_s: start.elapsed().as_secs_f64(),
                iteration: iterations,
                inliers: s.inliers,
            });
        }
    }
    Ok(RansacReport {
        best: sol,
        inlier_count: s.inliers,
        inlier_mask: s.mask,
        pre_lo_inliers,
        iterations,
        lo_runs,
        elapsed_s: start.elapsed().as_secs_f64(),
        trace,
    })
}
