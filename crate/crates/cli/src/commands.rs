use std::time::Duration;

use gravhom::geometry::{compose_homography, Mat3};
use gravhom::io::{self, DRIFT, NOISE, RANSAC_CURVE, RANSAC_REPEATS, RANSAC_TRACE, STABILITY, TIMING};
use gravhom::ransac::FRAME_BUDGET;
use gravhom::solvers::solve_minimal;
use gravhom::stats::Quantiles;
use gravhom::synth::experiments::{
    drift_experiment, noise_experiment, ransac_experiment, scene_for, stability_experiment, summarize_noise,
    timing_experiment, DriftConfig, DriftRecord, RansacScenario, StabilityRecord, TimingSummary,
};
use gravhom::{
    generate, run_ransac, Correspondence, GravityRotation, ImageFrame, Intrinsics, RansacConfig, SceneConfig,
    SolverKind, SolverSolution,
};
use serde::Serialize;

use crate::args::{
    DriftArgs, GenerateArgs, NoiseArgs, RansacArgs, RansacOptions, SolveArgs, StabilityArgs, TimingArgs,
};
use crate::output::Run;
use crate::CliError;

#[derive(Serialize)]
struct StabilitySummary {
    solver: SolverKind,
    instances: usize,
    failures: usize,
    max_solutions: usize,
    /// Share of instances with log10 homography error at most -6.
    accurate_fraction: f64,
    log10_h_err: Quantiles,
    log10_f_err: Quantiles,
    log10_lambda_err: Quantiles,
    solve_us: Quantiles,
}

fn summarize_stability(kind: SolverKind, recs: &[StabilityRecord]) -> StabilitySummary {
    let q = |pick: fn(&StabilityRecord) -> Option<f64>| Quantiles::from_values(recs.iter().filter_map(pick));
    StabilitySummary {
        solver: kind,
        instances: recs.len(),
        failures: recs.iter().filter(|r| r.status != "ok").count(),
        max_solutions: recs.iter().map(|r| r.n_solutions).max().unwrap_or(0),
        accurate_fraction: if recs.is_empty() {
            0.0
        } else {
            recs.iter().filter(|r| r.log10_h_err.is_some_and(|e| e <= -6.0)).count() as f64 / recs.len() as f64
        },
        log10_h_err: q(|r| r.log10_h_err),
        log10_f_err: q(|r| r.log10_f_err),
        log10_lambda_err: q(|r| r.log10_lambda_err),
        solve_us: q(|r| r.solve_us),
    }
}

pub fn stability(args: &StabilityArgs) -> Result<(), CliError> {
    let mut run = Run::start("stability", &args.common, args)?;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for &kind in &args.solver {
        let recs = stability_experiment(kind, args.instances, args.common.seed, !args.common.no_timings)?;
        let s = summarize_stability(kind, &recs);
        println!(
            "{kind}: {} instances, {:.2}% with log10 error <= -6, median {:.2}",
            s.instances,
            100.0 * s.accurate_fraction,
            s.log10_h_err.median
        );
        summaries.push(s);
        rows.extend(recs);
    }
    run.table("stability", &STABILITY, &rows)?;
    run.json("stability_summary.json", &serde_json::json!({ "solvers": summaries }))?;
    finish(run)
}

pub fn noise(args: &NoiseArgs) -> Result<(), CliError> {
    let mut run = Run::start("noise", &args.common, args)?;
    let mut rows = Vec::new();
    for &kind in &args.solver {
        rows.extend(noise_experiment(kind, &args.noise_sigma, args.instances, args.common.seed)?);
    }
    let summary = summarize_noise(&rows);
    for s in &summary {
        println!(
            "{} sigma {:.2} px: median e_R {:.3e} e_t {:.3e} e_f {:.3e} e_lambda {:.3e} ({} failures)",
            s.solver, s.sigma_px, s.e_rot.median, s.e_t.median, s.e_f.median, s.e_lambda.median, s.failures
        );
    }
    run.table("noise", &NOISE, &rows)?;
    run.json("noise_summary.json", &serde_json::json!({ "levels": summary }))?;
    finish(run)
}

#[derive(Serialize)]
struct DriftSummary {
    solver: SolverKind,
    drift_deg: f64,
    instances: usize,
    e_h: Quantiles,
    e_h_lo: Quantiles,
    e_f: Quantiles,
    e_f_lo: Quantiles,
    e_rot: Quantiles,
}

pub fn drift(args: &DriftArgs) -> Result<(), CliError> {
    let mut run = Run::start("drift", &args.common, args)?;
    let cfg = DriftConfig {
        sigma_px: args.noise_sigma,
        n_instances: args.instances,
        n_points: args.points,
        lo_max_steps: args.lo_steps,
        seed: args.common.seed,
    };
    let mut rows: Vec<DriftRecord> = Vec::new();
    let mut summary = Vec::new();
    for &kind in &args.solver {
        let recs = drift_experiment(kind, &args.drift_deg, &cfg)?;
        for &d in &args.drift_deg {
            let sel: Vec<&DriftRecord> = recs.iter().filter(|r| r.drift_deg == d).collect();
            let q = |pick: fn(&DriftRecord) -> Option<f64>| Quantiles::from_values(sel.iter().filter_map(|r| pick(r)));
            let s = DriftSummary {
                solver: kind,
                drift_deg: d,
                instances: sel.len(),
                e_h: q(|r| r.e_h),
                e_h_lo: q(|r| r.e_h_lo),
                e_f: q(|r| r.e_f),
                e_f_lo: q(|r| r.e_f_lo),
                e_rot: q(|r| r.e_rot),
            };
            println!(
                "{kind} drift {d} deg: median e_H {:.3e}, after refinement {:.3e}",
                s.e_h.median, s.e_h_lo.median
            );
            summary.push(s);
        }
        rows.extend(recs);
    }
    run.table("drift", &DRIFT, &rows)?;
    run.json("drift_summary.json", &serde_json::json!({ "levels": summary }))?;
    finish(run)
}

fn timing_table(rows: &[TimingSummary]) -> String {
    let mut s = format!("{:<8} {:>10} {:>12} {:>16} {:>14}\n", "solver", "instances", "mean_us", "median_means_us", "iters_30fps");
    for r in rows {
        s += &format!(
            "{:<8} {:>10} {:>12.3} {:>16.3} {:>14}\n",
            r.solver.name(),
            r.instances,
            r.mean_us,
            r.median_of_means_us,
            r.max_iterations_30fps
        );
    }
    s
}

pub fn timing(args: &TimingArgs) -> Result<(), CliError> {
    let mut run = Run::start("timing", &args.common, args)?;
    let rows = args
        .solver
        .iter()
        .map(|&k| timing_experiment(k, args.instances, args.warmup, args.batch, args.common.seed))
        .collect::<gravhom::Result<Vec<_>>>()?;
    let table = timing_table(&rows);
    print!("{table}");
    run.table("timing", &TIMING, &rows)?;
    run.json("timing_summary.json", &serde_json::json!({ "solvers": rows }))?;
    run.text("timing.txt", &table)?;
    finish(run)
}

fn ransac_config(opts: &RansacOptions) -> Result<RansacConfig, CliError> {
    let base = RansacConfig::new(opts.threshold_px);
    let time_budget = match (opts.time_budget_ms, opts.iterations) {
        (Some(ms), _) => {
            if !(ms > 0.0 && ms.is_finite()) {
                return Err(CliError::usage(format!("--time-budget-ms must be positive, got {ms}")));
            }
            Some(Duration::from_secs_f64(ms * 1e-3))
        }
        (None, Some(_)) => None,
        (None, None) => Some(FRAME_BUDGET),
    };
    let cfg = RansacConfig {
        max_iterations: opts.iterations,
        time_budget,
        lo_max_steps: opts.lo_steps,
        lo_trigger: !opts.no_lo,
        confidence: opts.confidence,
        symmetric: opts.symmetric,
        ..base
    };
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(cfg)
}

#[derive(Serialize)]
struct RansacSummary {
    solver: SolverKind,
    repeats: usize,
    failures: usize,
    mean_true_inliers: f64,
    mean_found_inliers: f64,
    mean_precision: f64,
    mean_recall: f64,
    mean_iterations: f64,
    elapsed_ms: Quantiles,
    config: RansacScenario,
}

pub fn ransac(args: &RansacArgs) -> Result<(), CliError> {
    if !(args.inlier_fraction > 0.0 && args.inlier_fraction <= 1.0) {
        return Err(CliError::usage(format!(
            "--inlier-fraction must lie in (0, 1], got {}",
            args.inlier_fraction
        )));
    }
    let mut run = Run::start("ransac", &args.common, args)?;
    let mut ransac = ransac_config(&args.ransac)?;
    // Per-repeat frames and known intrinsics come from the generated scenes.
    ransac.rng_seed = args.common.seed;
    let scenario = RansacScenario {
        n_points: args.points,
        inlier_fraction: args.inlier_fraction,
        noise_sigma_px: args.noise_sigma,
        repeats: args.repeats,
        seed: args.common.seed,
        ransac,
    };
    let timings = !args.common.no_timings;
    let exp = ransac_experiment(args.solver, &scenario, timings)?;
    let n = exp.repeats.len().max(1) as f64;
    let summary = RansacSummary {
        solver: args.solver,
        repeats: exp.repeats.len(),
        failures: exp.repeats.iter().filter(|r| r.status != "ok").count(),
        mean_true_inliers: exp.mean_true_inliers(),
        mean_found_inliers: exp.mean_found_inliers(),
        mean_precision: exp.repeats.iter().map(|r| r.precision).sum::<f64>() / n,
        mean_recall: exp.repeats.iter().map(|r| r.recall).sum::<f64>() / n,
        mean_iterations: exp.repeats.iter().map(|r| r.iterations as f64).sum::<f64>() / n,
        elapsed_ms: Quantiles::from_values(exp.repeats.iter().filter_map(|r| r.elapsed_ms)),
        config: scenario,
    };
    println!(
        "{}: {} repeats, inliers {:.1} of {:.1}, precision {:.3}, recall {:.3}",
        args.solver,
        summary.repeats,
        summary.mean_found_inliers,
        summary.mean_true_inliers,
        summary.mean_precision,
        summary.mean_recall
    );
    run.table("ransac_repeats", &RANSAC_REPEATS, &exp.repeats)?;
    run.table("ransac_trace", &RANSAC_TRACE, &exp.traces)?;
    if timings {
        let end_ms = scenario
            .ransac
            .time_budget
            .map(|b| b.as_secs_f64() * 1e3)
            .unwrap_or_else(|| exp.traces.iter().filter_map(|t| t.time_ms).fold(0.0, f64::max));
        let grid: Vec<f64> = (0..=100).map(|i| end_ms * i as f64 / 100.0).collect();
        #[derive(Serialize)]
        struct CurveRow {
            time_ms: f64,
            mean_inliers: f64,
        }
        let curve: Vec<CurveRow> = exp
            .averaged_curve(&grid)
            .into_iter()
            .map(|(time_ms, mean_inliers)| CurveRow { time_ms, mean_inliers })
            .collect();
        run.table("ransac_curve", &RANSAC_CURVE, &curve)?;
    }
    run.json("ransac_report.json", &summary)?;
    finish(run)
}

#[derive(Serialize)]
struct PoseOut {
    rotation: [[f64; 3]; 3],
    translation_dir: [f64; 3],
}

#[derive(Serialize)]
struct SolutionOut {
    h1: f64,
    h2: f64,
    h3: f64,
    f: f64,
    lambda: f64,
    held_out_residual: Option<f64>,
    /// Undistorted image homography in normalized coordinates, `h33 = 1`.
    homography: Option<[[f64; 3]; 3]>,
    pose: Option<PoseOut>,
}

fn rows(m: &Mat3) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| m[(i, j)]))
}

fn describe(sol: &SolverSolution, corr: &Correspondence) -> SolutionOut {
    let pose = sol.pose(corr).ok().map(|p| PoseOut {
        rotation: rows(&p.rotation.matrix()),
        translation_dir: [p.translation_dir.x, p.translation_dir.y, p.translation_dir.z],
    });
    SolutionOut {
        h1: sol.hy.h1,
        h2: sol.hy.h2,
        h3: sol.hy.h3,
        f: sol.f,
        lambda: sol.lambda,
        held_out_residual: sol.held_out_residual,
        homography: compose_homography(&sol.hy, &corr.r1, &corr.r2, &sol.intrinsics()).ok().map(|h| rows(&h)),
        pose,
    }
}

#[derive(Serialize)]
struct RobustOut {
    inliers: usize,
    inlier_rows: Vec<usize>,
    iterations: usize,
    elapsed_ms: Option<f64>,
}

pub fn solve(args: &SolveArgs) -> Result<(), CliError> {
    let (corrs, frame) = io::read_correspondences(&args.input, args.sidecar.as_deref())?;
    let known = Intrinsics::new(args.focal, args.lambda)?;
    let kind = args.solver;
    let m = kind.sample_size();
    if corrs.len() < m {
        return Err(gravhom::Error::InsufficientData { needed: m, got: corrs.len() }.into());
    }
    let mut run = Run::start("solve", &args.common, args)?;
    let (sols, robust) = if args.robust {
        let cfg = RansacConfig {
            known,
            frame,
            rng_seed: args.common.seed,
            ..ransac_config(&args.ransac)?
        };
        let report = run_ransac(&corrs, kind, &cfg)?;
        let inlier_rows = report
            .inlier_mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect();
        let robust = RobustOut {
            inliers: report.inlier_count,
            inlier_rows,
            iterations: report.iterations,
            elapsed_ms: (!args.common.no_timings).then_some(report.elapsed_s * 1e3),
        };
        (vec![report.best], Some(robust))
    } else {
        (solve_minimal(kind, &corrs[..m], &known)?, None)
    };
    let out: Vec<SolutionOut> = sols.iter().map(|s| describe(s, &corrs[0])).collect();
    println!("{kind}: {} solution(s)", out.len());
    for s in &out {
        println!("  f {:.6} lambda {:.6} h [{:.6}, {:.6}, {:.6}]", s.f, s.lambda, s.h1, s.h2, s.h3);
    }
    run.json(
        "solutions.json",
        &serde_json::json!({
            "solver": kind,
            "input": args.input,
            "rows": corrs.len(),
            "frame": { "width": frame.width, "height": frame.height },
            "robust": robust,
            "solutions": out,
        }),
    )?;
    finish(run)
}

#[derive(Serialize)]
struct GroundTruth {
    solver: SolverKind,
    frame: ImageFrame,
    f: f64,
    lambda: f64,
    h1: f64,
    h2: f64,
    h3: f64,
    r1_quaternion: [f64; 4],
    r2_quaternion: [f64; 4],
    relative_rotation: [[f64; 3]; 3],
    translation_dir: [f64; 3],
    homography: [[f64; 3]; 3],
    inlier: Vec<bool>,
}

fn quaternion(r: &GravityRotation) -> [f64; 4] {
    r.quaternion()
}

pub fn generate_scene(args: &GenerateArgs) -> Result<(), CliError> {
    if !(args.inlier_fraction > 0.0 && args.inlier_fraction <= 1.0) {
        return Err(CliError::usage(format!(
            "--inlier-fraction must lie in (0, 1], got {}",
            args.inlier_fraction
        )));
    }
    let mut run = Run::start("generate", &args.common, args)?;
    let cfg = SceneConfig {
        noise_sigma_px: args.noise_sigma,
        outlier_fraction: 1.0 - args.inlier_fraction,
        seed: args.common.seed,
        ..scene_for(args.solver, args.points)
    };
    let inst = generate(&cfg)?;
    let path = run.path("correspondences.csv");
    io::write_correspondences(&path, &inst.correspondences, &inst.frame)?;
    run.external(&path);
    run.external(&io::sidecar_path(&path));
    let t = inst.pose.translation_dir;
    run.json(
        "ground_truth.json",
        &GroundTruth {
            solver: args.solver,
            frame: inst.frame,
            f: inst.intrinsics.f,
            lambda: inst.intrinsics.lambda,
            h1: inst.hy.h1,
            h2: inst.hy.h2,
            h3: inst.hy.h3,
            r1_quaternion: quaternion(&inst.r1),
            r2_quaternion: quaternion(&inst.r2),
            relative_rotation: rows(&inst.pose.rotation.matrix()),
            translation_dir: [t.x, t.y, t.z],
            homography: rows(&inst.h),
            inlier: inst.inlier.clone(),
        },
    )?;
    println!("{} correspondences written to {}", inst.correspondences.len(), path.display());
    finish(run)
}

fn finish(run: Run) -> Result<(), CliError> {
    let path = run.finish()?;
    println!("manifest: {}", path.display());
    Ok(())
}
