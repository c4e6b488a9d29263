//! Experiment drivers over synthetic scenes.
//!
//! Instance `i` of every protocol draws its scene from
//! [`instance_rng`]`(seed, i)`, so levels of a sweep (noise, drift) share
//! geometry and differ only in the swept quantity. Instances run in parallel
//! on a rayon pool capped by `GRAVHOM_THREADS`; output order is always by
//! instance index.

use std::hint::black_box;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_with_rng, instance_rng, SceneConfig, SyntheticInstance};
use crate::error::{Error, Result};
use crate::geometry::{
    compose_homography, extract_pose, homography_error, lambda_error, pose_errors, Correspondence,
    Intrinsics,
};
use crate::ransac::{cost_px, lo_refine, run_ransac, RansacConfig, TracePoint, FRAME_BUDGET};
use crate::solvers::{solve_minimal, SolverKind, SolverSolution};
use crate::stats::{log10_floored, Quantiles};

/// Exact zeros are logged as this.
pub const LOG_FLOOR: f64 = 1e-20;
/// Environment variable capping experiment parallelism.
pub const THREADS_ENV: &str = "GRAVHOM_THREADS";

/// Runs `f` on a pool sized by [`THREADS_ENV`] (all cores when unset).
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| {
            Error::InvalidArgument(format!("{THREADS_ENV} must be a non-negative integer, got '{v}'"))
        })?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(pool.install(f))
}

/// Scene family used for a solver: fHf sees undistorted images, the other
/// solvers draw `lambda` from the configured range.
pub fn scene_for(kind: SolverKind, n_points: usize) -> SceneConfig {
    SceneConfig {
        n_points,
        lambda_gt: matches!(kind, SolverKind::Fhf).then_some(0.0),
        ..SceneConfig::default()
    }
}

/// Errors of one hypothesis against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionErrors {
    pub homography: f64,
    pub rotation: f64,
    pub translation: f64,
    pub focal: f64,
    pub lambda: f64,
}

/// Pose and homography errors of `sol`, built with the reported rotations.
pub fn evaluate(sol: &SolverSolution, inst: &SyntheticInstance) -> Option<SolutionErrors> {
    let c = inst.correspondences.first()?;
    let h = compose_homography(&sol.hy, &c.r1, &c.r2, &sol.intrinsics()).ok()?;
    let pose = extract_pose(&sol.hy, &c.r1, &c.r2).ok()?;
    let e = pose_errors(&pose, sol.f, &inst.pose, inst.intrinsics.f);
    Some(SolutionErrors {
        homography: homography_error(&h, &inst.h).ok()?,
        rotation: e.rotation,
        translation: e.translation,
        focal: e.focal,
        lambda: lambda_error(sol.lambda, inst.intrinsics.lambda),
    })
}

/// Solution closest to ground truth by homography error.
pub fn best_solution(
    sols: &[SolverSolution],
    inst: &SyntheticInstance,
) -> Option<(SolverSolution, SolutionErrors)> {
    sols.iter()
        .filter_map(|s| evaluate(s, inst).map(|e| (*s, e)))
        .min_by(|a, b| a.1.homography.total_cmp(&b.1.homography))
}

fn known_intrinsics(kind: SolverKind, inst: &SyntheticInstance) -> Intrinsics {
    match kind {
        SolverKind::Frhfr => Intrinsics { f: 1.0, lambda: 0.0 },
        _ => inst.intrinsics,
    }
}

fn status_of(r: &Result<Vec<SolverSolution>>) -> String {
    match r {
        Ok(s) if s.is_empty() => Error::NoSolution.category().to_string(),
        Ok(_) => "ok".to_string(),
        Err(e) => e.category().to_string(),
    }
}

fn timed_solve(
    kind: SolverKind,
    sample: &[Correspondence],
    known: &Intrinsics,
    timing: bool,
) -> (Result<Vec<SolverSolution>>, Option<f64>) {
    if timing {
        let t = Instant::now();
        let r = solve_minimal(kind, sample, known);
        (r, Some(t.elapsed().as_secs_f64() * 1e6))
    } else {
        (solve_minimal(kind, sample, known), None)
    }
}

/// One row of a stability run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub index: u64,
    pub seed: u64,
    pub solver: SolverKind,
    pub status: String,
    pub n_solutions: usize,
    pub log10_h_err: Option<f64>,
    pub log10_f_err: Option<f64>,
    pub log10_lambda_err: Option<f64>,
    pub solve_us: Option<f64>,
}

/// Noise-free minimal problems; errors of the best returned solution.
/// `f` and `lambda` errors are only reported when the solver estimates them.
pub fn stability_experiment(
    kind: SolverKind,
    n_instances: usize,
    seed: u64,
    timing: bool,
) -> Result<Vec<StabilityRecord>> {
    let config = scene_for(kind, kind.sample_size());
    with_pool(|| {
        (0..n_instances as u64)
            .into_par_iter()
            .map(|i| -> Result<StabilityRecord> {
                let inst = generate_with_rng(&config, &mut instance_rng(seed, i))?;
                let (res, us) = timed_solve(kind, &inst.correspondences, &known_intrinsics(kind, &inst), timing);
                let status = status_of(&res);
                let sols = res.unwrap_or_default();
                let best = best_solution(&sols, &inst).map(|b| b.1);
                Ok(StabilityRecord {
                    index: i,
                    seed,
                    solver: kind,
                    status,
                    n_solutions: sols.len(),
                    log10_h_err: best.map(|e| log10_floored(e.homography, LOG_FLOOR)),
                    log10_f_err: best
                        .filter(|_| kind.estimates_focal())
                        .map(|e| log10_floored(e.focal, LOG_FLOOR)),
                    log10_lambda_err: best
                        .filter(|_| kind.estimates_distortion())
                        .map(|e| log10_floored(e.lambda, LOG_FLOOR)),
                    solve_us: us,
                })
            })
            .collect()
    })?
}

/// One row of a noise sweep. Errors in radians / relative units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub sigma_px: f64,
    pub index: u64,
    pub seed: u64,
    pub solver: SolverKind,
    pub status: String,
    pub n_solutions: usize,
    pub e_rot: Option<f64>,
    pub e_t: Option<f64>,
    pub e_f: Option<f64>,
    pub e_lambda: Option<f64>,
    pub e_h: Option<f64>,
}

/// Minimal problems with Gaussian pixel noise at each level.
pub fn noise_experiment(
    kind: SolverKind,
    sigmas_px: &[f64],
    n_per_level: usize,
    seed: u64,
) -> Result<Vec<NoiseRecord>> {
    let mut out = Vec::with_capacity(sigmas_px.len() * n_per_level);
    for &sigma in sigmas_px {
        let config = SceneConfig {
            noise_sigma_px: sigma,
            ..scene_for(kind, kind.sample_size())
        };
        config.validate()?;
        let level: Result<Vec<NoiseRecord>> = with_pool(|| {
            (0..n_per_level as u64)
                .into_par_iter()
                .map(|i| -> Result<NoiseRecord> {
                    let inst = generate_with_rng(&config, &mut instance_rng(seed, i))?;
                    let res = solve_minimal(kind, &inst.correspondences, &known_intrinsics(kind, &inst));
                    let status = status_of(&res);
                    let sols = res.unwrap_or_default();
                    let best = best_solution(&sols, &inst).map(|b| b.1);
                    Ok(NoiseRecord {
                        sigma_px: sigma,
                        index: i,
                        seed,
                        solver: kind,
                        status,
                        n_solutions: sols.len(),
                        e_rot: best.map(|e| e.rotation),
                        e_t: best.map(|e| e.translation),
                        e_f: best.filter(|_| kind.estimates_focal()).map(|e| e.focal),
                        e_lambda: best.filter(|_| kind.estimates_distortion()).map(|e| e.lambda),
                        e_h: best.map(|e| e.homography),
                    })
                })
                .collect()
        })?;
        out.extend(level?);
    }
    Ok(out)
}

/// Quantiles of each error per noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSummary {
    pub sigma_px: f64,
    pub solver: SolverKind,
    pub instances: usize,
    pub failures: usize,
    pub e_rot: Quantiles,
    pub e_t: Quantiles,
    pub e_f: Quantiles,
    pub e_lambda: Quantiles,
    pub e_h: Quantiles,
}

/// Groups records by `(solver, sigma)` in order of first appearance.
pub fn summarize_noise(records: &[NoiseRecord]) -> Vec<NoiseSummary> {
    let mut keys: Vec<(SolverKind, f64)> = Vec::new();
    for r in records {
        if !keys.iter().any(|k| k.0 == r.solver && k.1 == r.sigma_px) {
            keys.push((r.solver, r.sigma_px));
        }
    }
    keys.into_iter()
        .map(|(solver, sigma)| {
            let rows: Vec<&NoiseRecord> = records
                .iter()
                .filter(|r| r.solver == solver && r.sigma_px == sigma)
                .collect();
            let q = |get: fn(&NoiseRecord) -> Option<f64>| {
                Quantiles::from_values(rows.iter().filter_map(|r| get(r)))
            };
            NoiseSummary {
                sigma_px: sigma,
                solver,
                instances: rows.len(),
                failures: rows.iter().filter(|r| r.e_h.is_none()).count(),
                e_rot: q(|r| r.e_rot),
                e_t: q(|r| r.e_t),
                e_f: q(|r| r.e_f),
                e_lambda: q(|r| r.e_lambda),
                e_h: q(|r| r.e_h),
            }
        })
        .collect()
}

/// Settings of a yaw drift sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    pub sigma_px: f64,
    pub n_instances: usize,
    /// Points per scene; the minimal sample is taken from the first ones and
    /// refinement uses all of them.
    pub n_points: usize,
    pub lo_max_steps: usize,
    pub seed: u64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            sigma_px: 0.5,
            n_instances: 1000,
            n_points: 20,
            lo_max_steps: 20,
            seed: 0,
        }
    }
}

/// One row of a drift sweep: errors before and after refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRecord {
    pub drift_deg: f64,
    pub index: u64,
    pub solver: SolverKind,
    pub status: String,
    pub e_rot: Option<f64>,
    pub e_h: Option<f64>,
    pub e_h_lo: Option<f64>,
    pub e_f: Option<f64>,
    pub e_f_lo: Option<f64>,
    /// Summed squared reprojection error (px^2) before and after refinement.
    pub cost: Option<f64>,
    pub cost_lo: Option<f64>,
}

/// Solver on a minimal sample, then refinement on every point of the scene,
/// across yaw drift levels.
pub fn drift_experiment(kind: SolverKind, drifts_deg: &[f64], config: &DriftConfig) -> Result<Vec<DriftRecord>> {
    let m = kind.sample_size();
    if config.n_points < m.max(crate::ransac::MIN_LO_INLIERS) {
        return Err(Error::InvalidArgument(format!(
            "drift scenes need at least {} points",
            m.max(crate::ransac::MIN_LO_INLIERS)
        )));
    }
    let mut out = Vec::new();
    for &drift in drifts_deg {
        let scene = SceneConfig {
            noise_sigma_px: config.sigma_px,
            yaw_drift_deg: drift,
            ..scene_for(kind, config.n_points)
        };
        scene.validate()?;
        let level: Result<Vec<DriftRecord>> = with_pool(|| {
            (0..config.n_instances as u64)
                .into_par_iter()
                .map(|i| -> Result<DriftRecord> {
                    let inst = generate_with_rng(&scene, &mut instance_rng(config.seed, i))?;
                    let res = solve_minimal(kind, &inst.correspondences[..m], &known_intrinsics(kind, &inst));
                    let status = status_of(&res);
                    let best = best_solution(&res.unwrap_or_default(), &inst);
                    let mut rec = DriftRecord {
                        drift_deg: drift,
                        index: i,
                        solver: kind,
                        status,
                        e_rot: None,
                        e_h: None,
                        e_h_lo: None,
                        e_f: None,
                        e_f_lo: None,
                        cost: None,
                        cost_lo: None,
                    };
                    if let Some((sol, e)) = best {
                        rec.e_rot = Some(e.rotation);
                        rec.e_h = Some(e.homography);
                        rec.e_f = Some(e.focal);
                        rec.cost = Some(cost_px(&sol, &inst.correspondences, &inst.frame));
                        let refined = lo_refine(&sol, &inst.correspondences, &inst.frame, config.lo_max_steps)?;
                        rec.cost_lo = Some(cost_px(&refined, &inst.correspondences, &inst.frame));
                        if let Some(e) = evaluate(&refined, &inst) {
                            rec.e_h_lo = Some(e.homography);
                            rec.e_f_lo = Some(e.focal);
                        }
                    }
                    Ok(rec)
                })
                .collect()
        })?;
        out.extend(level?);
    }
    Ok(out)
}

/// Per-solver timing table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub solver: SolverKind,
    pub instances: usize,
    pub warmup: usize,
    pub batch_size: usize,
    pub mean_us: f64,
    /// Median of the per-batch mean times.
    pub median_of_means_us: f64,
    /// Whole iterations that fit in one 30 fps frame at the mean time.
    pub max_iterations_30fps: u64,
}

/// `floor(33333 / mean_us)`.
pub fn frame_iterations(mean_us: f64) -> u64 {
    if mean_us > 0.0 {
        (FRAME_BUDGET.as_micros() as f64 / mean_us).floor() as u64
    } else {
        u64::MAX
    }
}

/// Mean wall time per solver call over `n` pre-generated minimal problems,
/// single-threaded, after `warmup` untimed calls.
pub fn timing_experiment(
    kind: SolverKind,
    n: usize,
    warmup: usize,
    batch_size: usize,
    seed: u64,
) -> Result<TimingSummary> {
    if n == 0 || batch_size == 0 {
        return Err(Error::InvalidArgument(
            "timing needs at least one instance and a positive batch size".into(),
        ));
    }
    let config = scene_for(kind, kind.sample_size());
    let problems: Vec<(Vec<Correspondence>, Intrinsics)> = with_pool(|| {
        (0..n as u64)
            .into_par_iter()
            .map(|i| {
                generate_with_rng(&config, &mut instance_rng(seed, i))
                    .map(|inst| (inst.correspondences.clone(), known_intrinsics(kind, &inst)))
            })
            .collect::<Result<Vec<_>>>()
    })??;

    for i in 0..warmup {
        let (c, k) = &problems[i % n];
        let _ = black_box(solve_minimal(kind, black_box(c), k));
    }
    let mut total = Duration::ZERO;
    let mut batch_means = Vec::new();
    for chunk in problems.chunks(batch_size) {
        let start = Instant::now();
        for (c, k) in chunk {
            let _ = black_box(solve_minimal(kind, black_box(c), k));
        }
        let el = start.elapsed();
        total += el;
        batch_means.push(el.as_secs_f64() * 1e6 / chunk.len() as f64);
    }
    let mean_us = total.as_secs_f64() * 1e6 / n as f64;
    Ok(TimingSummary {
        solver: kind,
        instances: n,
        warmup,
        batch_size,
        mean_us,
        median_of_means_us: crate::stats::median(batch_means),
        max_iterations_30fps: frame_iterations(mean_us),
    })
}

/// Settings of the contaminated-scene RANSAC protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacScenario {
    pub n_points: usize,
    pub inlier_fraction: f64,
    pub noise_sigma_px: f64,
    pub repeats: usize,
    pub seed: u64,
    pub ransac: RansacConfig,
}

impl Default for RansacScenario {
    fn default() -> Self {
        Self {
            n_points: 200,
            inlier_fraction: 0.7,
            noise_sigma_px: 1.0,
            repeats: 100,
            seed: 0,
            ransac: RansacConfig::new(5.0),
        }
    }
}

/// Outcome of one RANSAC repeat against generator labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub repeat: u64,
    pub status: String,
    pub true_inliers: usize,
    pub found_inliers: usize,
    pub precision: f64,
    pub recall: f64,
    pub iterations: usize,
    pub elapsed_ms: Option<f64>,
    pub e_h: Option<f64>,
    pub e_f: Option<f64>,
}

/// One point of a per-repeat trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub repeat: u64,
    pub iteration: usize,
    pub inliers: usize,
    pub time_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RansacExperiment {
    pub repeats: Vec<RepeatSummary>,
    pub traces: Vec<TraceRow>,
}

impl RansacExperiment {
    pub fn mean_found_inliers(&self) -> f64 {
        self.repeats.iter().map(|r| r.found_inliers as f64).sum::<f64>() / self.repeats.len().max(1) as f64
    }

    pub fn mean_true_inliers(&self) -> f64 {
        self.repeats.iter().map(|r| r.true_inliers as f64).sum::<f64>() / self.repeats.len().max(1) as f64
    }

    /// Best-so-far inlier count averaged over repeats at each grid time.
    /// Repeats count zero before their first model and keep their last value
    /// afterwards.
    pub fn averaged_curve(&self, grid_ms: &[f64]) -> Vec<(f64, f64)> {
        let n = self.repeats.len().max(1) as f64;
        grid_ms
            .iter()
            .map(|&t| {
                let total: usize = self
                    .repeats
                    .iter()
                    .map(|r| {
                        self.traces
                            .iter()
                            .filter(|p| p.repeat == r.repeat && p.time_ms.is_some_and(|x| x <= t))
                            .map(|p| p.inliers)
                            .max()
                            .unwrap_or(0)
                    })
                    .sum();
                (t, total as f64 / n)
            })
            .collect()
    }
}

/// Derives the sampler seed of a repeat from the base seed.
pub fn repeat_seed(seed: u64, repeat: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ repeat.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs RANSAC on `repeats` independently generated contaminated scenes,
/// sequentially so that the time budget is not shared between runs.
pub fn ransac_experiment(kind: SolverKind, scenario: &RansacScenario, timing: bool) -> Result<RansacExperiment> {
    if !(0.0..=1.0).contains(&scenario.inlier_fraction) || scenario.inlier_fraction == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "inlier fraction must lie in (0, 1], got {}",
            scenario.inlier_fraction
        )));
    }
    let scene = SceneConfig {
        noise_sigma_px: scenario.noise_sigma_px,
        outlier_fraction: 1.0 - scenario.inlier_fraction,
        ..scene_for(kind, scenario.n_points)
    };
    scene.validate()?;
    scenario.ransac.validate()?;
    let mut repeats = Vec::with_capacity(scenario.repeats);
    let mut traces = Vec::new();
    for r in 0..scenario.repeats as u64 {
        let inst = generate_with_rng(&scene, &mut instance_rng(scenario.seed, r))?;
        let config = RansacConfig {
            known: known_intrinsics(kind, &inst),
            frame: inst.frame,
            rng_seed: repeat_seed(scenario.seed, r),
            ..scenario.ransac
        };
        let true_inliers = inst.inlier.iter().filter(|&&b| b).count();
        match run_ransac(&inst.correspondences, kind, &config) {
            Ok(report) => {
                let tp = report
                    .inlier_mask
                    .iter()
                    .zip(&inst.inlier)
                    .filter(|(a, b)| **a && **b)
                    .count();
                let e = evaluate(&report.best, &inst);
                repeats.push(RepeatSummary {
                    repeat: r,
                    status: "ok".into(),
                    true_inliers,
                    found_inliers: report.inlier_count,
                    precision: if report.inlier_count > 0 { tp as f64 / report.inlier_count as f64 } else { 0.0 },
                    recall: if true_inliers > 0 { tp as f64 / true_inliers as f64 } else { 1.0 },
                    iterations: report.iterations,
                    elapsed_ms: timing.then_some(report.elapsed_s * 1e3),
                    e_h: e.map(|e| e.homography),
                    e_f: e.map(|e| e.focal),
                });
                traces.extend(report.trace.iter().map(|p: &TracePoint| TraceRow {
                    repeat: r,
                    iteration: p.iteration,
                    inliers: p.inliers,
                    time_ms: timing.then_some(p.time_s * 1e3),
                }));
            }
            Err(e) => repeats.push(RepeatSummary {
                repeat: r,
                status: e.category().into(),
                true_inliers,
                found_inliers: 0,
                precision: 0.0,
                recall: 0.0,
                iterations: 0,
                elapsed_ms: None,
                e_h: None,
                e_f: None,
            }),
        }
    }
    Ok(RansacExperiment { repeats, traces })
}
