//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs under `cargo test` with the optimized test profile.

use std::process::ExitCode;
use std::time::Instant;

use gravhom::geometry::{compose_homography, decompose_homography, extract_pose, redistort, undistort};
use gravhom::io::{self, TableSchema, DRIFT, NOISE, RANSAC_REPEATS, RANSAC_TRACE, STABILITY};
use gravhom::poly::det_polymatrix;
use gravhom::ransac::{cost_px, lo_refine};
use gravhom::solvers::fhf::{build_fhf_matrix, fhf_sextic};
use gravhom::stats::median;
use gravhom::synth::experiments::{
    drift_experiment, noise_experiment, ransac_experiment, scene_for, stability_experiment, summarize_noise,
    timing_experiment, DriftConfig, RansacScenario, StabilityRecord,
};
use gravhom::{generate, ImagePoint, MotionHomography, RansacConfig, SceneConfig, SolverKind, SolverSolution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const SEED: u64 = 20240917;
const STABILITY_INSTANCES: usize = 10_000;
const NOISE_LEVELS: [f64; 5] = [0.0, 0.1, 0.5, 1.0, 2.0];
const NOISE_INSTANCES: usize = 1_000;
const TIMING_INSTANCES: usize = 100_000;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fraction(recs: &[StabilityRecord], pick: impl Fn(&StabilityRecord) -> Option<f64>) -> f64 {
    recs.iter().filter(|r| pick(r).is_some_and(|e| e <= -6.0)).count() as f64 / recs.len() as f64
}

fn med(recs: &[StabilityRecord], pick: impl Fn(&StabilityRecord) -> Option<f64>) -> f64 {
    median(recs.iter().filter_map(pick))
}

fn stability_fhf(recs: &[StabilityRecord], secs: f64) -> Outcome {
    let (fh, ff) = (fraction(recs, |r| r.log10_h_err), fraction(recs, |r| r.log10_f_err));
    let (mh, mf) = (med(recs, |r| r.log10_h_err), med(recs, |r| r.log10_f_err));
    check(
        fh >= 0.99 && ff >= 0.99 && mh <= -8.0 && mf <= -8.0 && secs < 60.0,
        format!("<=-6: h {:.2}% f {:.2}%; median h {mh:.1} f {mf:.1}; {secs:.2} s", 100.0 * fh, 100.0 * ff),
    )
}

fn stability_frhfr(recs: &[StabilityRecord], secs: f64) -> Outcome {
    let fh = fraction(recs, |r| r.log10_h_err);
    let ff = fraction(recs, |r| r.log10_f_err);
    let fl = fraction(recs, |r| r.log10_lambda_err);
    check(
        fh >= 0.99 && ff >= 0.99 && fl >= 0.99 && secs < 120.0,
        format!(
            "<=-6: h {:.2}% f {:.2}% lambda {:.2}%; median h {:.1}; {secs:.2} s",
            100.0 * fh,
            100.0 * ff,
            100.0 * fl,
            med(recs, |r| r.log10_h_err)
        ),
    )
}

fn cardinality(fhf: &[StabilityRecord], frhfr: &[StabilityRecord]) -> Outcome {
    let max = |r: &[StabilityRecord]| r.iter().map(|x| x.n_solutions).max().unwrap_or(0);
    let bad = fhf.iter().filter(|r| r.n_solutions > 4).count() + frhfr.iter().filter(|r| r.n_solutions > 3).count();
    check(bad == 0, format!("max fHf {}, max frHfr {}, violations {bad}", max(fhf), max(frhfr)))
}

fn noise_monotonicity() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for kind in [SolverKind::Calibrated, SolverKind::Fhf, SolverKind::Frhfr] {
        let recs = noise_experiment(kind, &NOISE_LEVELS, NOISE_INSTANCES, SEED).map_err(|e| e.to_string())?;
        let sums = summarize_noise(&recs);
        let metrics: [(&str, Vec<f64>); 4] = [
            ("e_R", sums.iter().map(|s| s.e_rot.median).collect()),
            ("e_t", sums.iter().map(|s| s.e_t.median).collect()),
            ("e_f", sums.iter().map(|s| s.e_f.median).collect()),
            ("e_l", sums.iter().map(|s| s.e_lambda.median).collect()),
        ];
        let mut inv = Vec::new();
        for (name, m) in &metrics {
            // Metrics a solver does not estimate have no values.
            if m.iter().all(|x| x.is_nan()) {
                continue;
            }
            let n = m.windows(2).filter(|w| w[1] < w[0]).count();
            ok &= n <= 1;
            inv.push(format!("{name} {n}"));
        }
        details.push(format!("{kind}: inversions {}", inv.join(" ")));
    }
    check(ok, details.join("; "))
}

fn ransac_convergence() -> Outcome {
    let mut ok = true;
    let mut details = Vec::new();
    for kind in [SolverKind::Calibrated, SolverKind::Fhf, SolverKind::Frhfr] {
        let scenario = RansacScenario { seed: SEED, ..RansacScenario::default() };
        let exp = ransac_experiment(kind, &scenario, true).map_err(|e| e.to_string())?;
        let n = exp.repeats.len() as f64;
        let found = exp.mean_found_inliers();
        let truth = exp.mean_true_inliers();
        let precision = exp.repeats.iter().map(|r| r.precision).sum::<f64>() / n;
        let recall = exp.repeats.iter().map(|r| r.recall).sum::<f64>() / n;
        let ms = median(exp.repeats.iter().filter_map(|r| r.elapsed_ms));
        let pass = exp.repeats.len() == 100
            && (found - truth).abs() <= 0.05 * truth
            && precision >= 0.95
            && recall >= 0.95;
        ok &= pass;
        details.push(format!(
            "{kind}: found {found:.1}/{truth:.1}, precision {precision:.3}, recall {recall:.3}, median {ms:.2} ms"
        ));
    }
    check(ok, details.join("; "))
}

fn speed() -> Outcome {
    let mut ok = true;
    let mut details = Vec::new();
    for kind in [SolverKind::Calibrated, SolverKind::Fhf, SolverKind::Frhfr] {
        let t = timing_experiment(kind, TIMING_INSTANCES, 1_000, 1_000, SEED).map_err(|e| e.to_string())?;
        ok &= t.mean_us <= 1_000.0;
        details.push(format!("{kind} {:.2} us", t.mean_us));
    }
    check(ok, details.join(", "))
}

fn csv_bytes<T: Serialize>(schema: &TableSchema, rows: &[T]) -> Result<Vec<u8>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("t.csv");
    io::write_table(&path, schema, rows).map_err(|e| e.to_string())?;
    std::fs::read(path).map_err(|e| e.to_string())
}

fn all_csvs() -> Result<Vec<Vec<u8>>, String> {
    let e = |e: gravhom::Error| e.to_string();
    let mut out = Vec::new();
    for kind in [SolverKind::Calibrated, SolverKind::Fhf, SolverKind::Frhfr] {
        out.push(csv_bytes(&STABILITY, &stability_experiment(kind, 300, SEED, false).map_err(e)?)?);
        out.push(csv_bytes(&NOISE, &noise_experiment(kind, &[0.0, 1.0], 100, SEED).map_err(e)?)?);
        let drift = DriftConfig { n_instances: 50, seed: SEED, ..DriftConfig::default() };
        out.push(csv_bytes(&DRIFT, &drift_experiment(kind, &[0.0, 1.0], &drift).map_err(e)?)?);
        let scenario = RansacScenario {
            repeats: 5,
            seed: SEED,
            ransac: RansacConfig { max_iterations: Some(50), time_budget: None, ..RansacConfig::new(5.0) },
            ..RansacScenario::default()
        };
        let exp = ransac_experiment(kind, &scenario, false).map_err(e)?;
        out.push(csv_bytes(&RANSAC_REPEATS, &exp.repeats)?);
        out.push(csv_bytes(&RANSAC_TRACE, &exp.traces)?);
    }
    Ok(out)
}

fn oracle_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut failures = Vec::new();

    // Distortion round trip.
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let lambda = rng.random_range(-0.6..0.0);
        let p = ImagePoint::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if 1.0 + lambda * p.radius_sq() <= 0.05 {
            continue;
        }
        let back = undistort(p, lambda).and_then(|u| redistort(u, lambda)).map_err(|e| e.to_string())?;
        worst = worst.max((back.to_vec() - p.to_vec()).norm());
    }
    if worst > 1e-10 {
        failures.push(format!("distortion {worst:.1e}"));
    }
    let dist = worst;

    // Compose, decompose, extract.
    let mut worst: f64 = 0.0;
    for seed in 0..1_000 {
        let inst = generate(&SceneConfig { n_points: 2, seed, ..SceneConfig::default() }).map_err(|e| e.to_string())?;
        let h = compose_homography(&inst.hy, &inst.r1, &inst.r2, &inst.intrinsics).map_err(|e| e.to_string())?;
        let hy = decompose_homography(&h, &inst.r1, &inst.r2, &inst.intrinsics).map_err(|e| e.to_string())?;
        let pose = extract_pose(&hy, &inst.r1, &inst.r2).map_err(|e| e.to_string())?;
        worst = worst
            .max((hy.translation() - inst.hy.translation()).norm())
            .max((pose.rotation.matrix() - inst.pose.rotation.matrix()).norm())
            .max((pose.translation_dir - inst.pose.translation_dir).norm());
    }
    if worst > 1e-9 {
        failures.push(format!("pose {worst:.1e}"));
    }
    let pose = worst;

    // Determinant polynomial against scalar determinants.
    let mut worst: f64 = 0.0;
    for seed in 0..1_000 {
        let inst = generate(&SceneConfig { n_points: 2, seed, lambda_gt: Some(0.0), ..SceneConfig::default() })
            .map_err(|e| e.to_string())?;
        let m = build_fhf_matrix(&[inst.correspondences[0], inst.correspondences[1]]);
        let full = det_polymatrix(&m).map_err(|e| e.to_string())?;
        let sextic = fhf_sextic(&m).map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let w = rng.random_range(0.2..3.0);
            let mw = m.eval(w);
            let scale: f64 = mw.row_iter().map(|r| r.norm()).product();
            let d = mw.determinant();
            worst = worst.max((full.eval(w) - d).abs() / scale).max((sextic.eval(w) - d).abs() / scale);
        }
    }
    if worst > 1e-9 {
        failures.push(format!("det {worst:.1e}"));
    }
    let det = worst;

    // Local optimization never increases the cost.
    let mut increases = 0;
    for i in 0..100u64 {
        let kind = [SolverKind::Calibrated, SolverKind::Fhf, SolverKind::Frhfr][i as usize % 3];
        let inst = generate(&SceneConfig { noise_sigma_px: 1.0, seed: i, ..scene_for(kind, 30) })
            .map_err(|e| e.to_string())?;
        let start = SolverSolution {
            hy: MotionHomography::new(
                inst.hy.h1 + rng.random_range(-0.05..0.05),
                inst.hy.h2 + rng.random_range(-0.05..0.05),
                inst.hy.h3 + rng.random_range(-0.05..0.05),
            ),
            f: inst.intrinsics.f * if kind.estimates_focal() { rng.random_range(0.9..1.1) } else { 1.0 },
            lambda: inst.intrinsics.lambda + if kind.estimates_distortion() { rng.random_range(-0.05..0.05) } else { 0.0 },
            held_out_residual: None,
            tag: kind,
        };
        let before = cost_px(&start, &inst.correspondences, &inst.frame);
        let refined = lo_refine(&start, &inst.correspondences, &inst.frame, 20).map_err(|e| e.to_string())?;
        if cost_px(&refined, &inst.correspondences, &inst.frame) > before {
            increases += 1;
        }
    }
    if increases > 0 {
        failures.push(format!("LO increased cost {increases} times"));
    }

    // Seeded determinism.
    let identical = all_csvs()? == all_csvs()?;
    if !identical {
        failures.push("CSV outputs differ between runs".into());
    }

    let detail = format!(
        "distortion {dist:.1e}, pose {pose:.1e}, det {det:.1e}, LO increases {increases}/100, CSV identical {identical}"
    );
    check(failures.is_empty(), detail)
}

fn drift_direction() -> Outcome {
    let mut ok = true;
    let mut details = Vec::new();
    for kind in [SolverKind::Fhf, SolverKind::Frhfr] {
        let cfg = DriftConfig { seed: SEED, ..DriftConfig::default() };
        let recs = drift_experiment(kind, &[0.0, 0.1, 45.0], &cfg).map_err(|e| e.to_string())?;
        let med = |d: f64, lo: bool| {
            median(recs.iter().filter(|r| r.drift_deg == d).filter_map(|r| if lo { r.e_h_lo } else { r.e_h }))
        };
        let small = med(0.1, true) / med(0.0, true);
        let large = med(45.0, false) / med(0.1, false);
        ok &= small <= 2.0 && large >= 10.0;
        details.push(format!("{kind}: LO 0.1/0 ratio {small:.2}, solver 45/0.1 ratio {large:.1}"));
    }
    check(ok, details.join("; "))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, outcome: Outcome| {
        match outcome {
            Ok(d) => println!("PASS {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d}");
            }
        }
    };

    let t = Instant::now();
    let fhf = stability_experiment(SolverKind::Fhf, STABILITY_INSTANCES, SEED, false);
    let fhf_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let frhfr = stability_experiment(SolverKind::Frhfr, STABILITY_INSTANCES, SEED, false);
    let frhfr_s = t.elapsed().as_secs_f64();
    match (fhf, frhfr) {
        (Ok(a), Ok(b)) => {
            report("stability_fhf", stability_fhf(&a, fhf_s));
            report("stability_frhfr", stability_frhfr(&b, frhfr_s));
            report("cardinality", cardinality(&a, &b));
        }
        (a, b) => {
            let msg = format!("{:?} {:?}", a.err(), b.err());
            report("stability_fhf", Err(msg.clone()));
            report("stability_frhfr", Err(msg.clone()));
            report("cardinality", Err(msg));
        }
    }
    report("noise_monotonicity", noise_monotonicity());
    report("ransac_convergence", ransac_convergence());
    report("speed_envelope", speed());
    report("oracle_property_suite", oracle_suite());
    report("drift_direction", drift_direction());

    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
