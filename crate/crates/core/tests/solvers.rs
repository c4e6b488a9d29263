use gravhom::geometry::{homography_error, compose_homography, Vec3};
use gravhom::solvers::fhf::{build_fhf_matrix, solve_fhf_detailed};
use gravhom::solvers::{
    build_frhfr_system, filter_by_unused_equation, solve_calibrated, solve_fhf, solve_frhfr,
    transfer_residual, HeldOutEquation, SolverSolution,
};
use gravhom::synth::{evaluate, generate, SceneConfig, SyntheticInstance};
use gravhom::{Correspondence, Error, ImagePoint, Intrinsics, SolverKind};
use proptest::prelude::*;

fn scene(n: usize, f: f64, lambda: f64, seed: u64) -> SyntheticInstance {
    generate(&SceneConfig {
        n_points: n,
        f_gt: Some(f),
        lambda_gt: Some(lambda),
        seed,
        ..SceneConfig::default()
    })
    .unwrap()
}

fn pair(inst: &SyntheticInstance) -> [Correspondence; 2] {
    [inst.correspondences[0], inst.correspondences[1]]
}

fn triple(inst: &SyntheticInstance) -> [Correspondence; 3] {
    [inst.correspondences[0], inst.correspondences[1], inst.correspondences[2]]
}

/// Ground point (x, z) of each view for a trial focal length, no distortion.
fn ground_points(c: &Correspondence, f: f64) -> Option<([f64; 2], [f64; 2])> {
    let (a, b) = c.aligned_rays(&Intrinsics { f, lambda: 0.0 });
    if a.y.abs() < 1e-12 || b.y.abs() < 1e-12 {
        return None;
    }
    Some(([a.x / a.y, a.z / a.y], [b.x / b.y, b.z / b.y]))
}

/// Sine of the angle between the ground segments of the two views.
fn segment_misalignment(c: &[Correspondence; 2], f: f64) -> Option<f64> {
    let (p1, q1) = ground_points(&c[0], f)?;
    let (p2, q2) = ground_points(&c[1], f)?;
    let dp = [p2[0] - p1[0], p2[1] - p1[1]];
    let dq = [q2[0] - q1[0], q2[1] - q1[1]];
    let n = (dp[0].hypot(dp[1])) * (dq[0].hypot(dq[1]));
    Some((dp[0] * dq[1] - dp[1] * dq[0]) / n)
}

/// Focal lengths at which the two ground segments are parallel, by sign
/// changes on a log grid and bisection.
fn parallel_focal_lengths(c: &[Correspondence; 2]) -> Vec<f64> {
    let grid: Vec<f64> = (0..=4000).map(|i| 10f64.powf(-1.5 + 3.0 * i as f64 / 4000.0)).collect();
    let mut roots = Vec::new();
    for w in grid.windows(2) {
        let (Some(g0), Some(g1)) = (segment_misalignment(c, w[0]), segment_misalignment(c, w[1])) else {
            continue;
        };
        if g0.signum() == g1.signum() {
            continue;
        }
        let (mut lo, mut hi, mut glo) = (w[0], w[1], g0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let Some(gm) = segment_misalignment(c, mid) else { break };
            if gm.signum() == glo.signum() {
                lo = mid;
                glo = gm;
            } else {
                hi = mid;
            }
        }
        let r = 0.5 * (lo + hi);
        // Poles flip sign too; keep genuine zeros only.
        if segment_misalignment(c, r).is_some_and(|g| g.abs() < 1e-9) {
            roots.push(r);
        }
    }
    roots
}

#[test]
fn calibrated_recovers_known_translation() {
    // t = c1 - c2 = (0.1, -0.05, 0.2) gives h = (0.1, 0.95, 0.2).
    let down = gravhom::synth::camera_rotation(0.1, -0.2, 0.3);
    let tilt = gravhom::synth::camera_rotation(-0.15, 0.05, 1.2);
    let t = Vec3::new(0.1, -0.05, 0.2);
    let intr = Intrinsics::new(1.1, -0.2).unwrap();
    let project = |r: &gravhom::GravityRotation, x: Vec3| gravhom::synth::project_point(r.matrix() * x, &intr).unwrap();
    let corrs: Vec<Correspondence> = [Vec3::new(0.2, 1.0, 0.1), Vec3::new(-0.3, 1.0, -0.2)]
        .iter()
        .map(|&x| Correspondence::new(project(&down, x), project(&tilt, x + t), down, tilt))
        .collect();
    let sol = solve_calibrated(&[corrs[0], corrs[1]], &intr).unwrap();
    assert!((sol.hy.h1 - 0.1).abs() < 1e-12);
    assert!((sol.hy.h2 - 0.95).abs() < 1e-12);
    assert!((sol.hy.h3 - 0.2).abs() < 1e-12);
    assert!(sol.held_out_residual.unwrap() <= 1e-9);
}

#[test]
fn fhf_matches_ground_plane_oracle() {
    for seed in 0..40 {
        let inst = scene(2, 1.2, 0.0, seed);
        let corrs = pair(&inst);
        let mut oracle = parallel_focal_lengths(&corrs);
        oracle.sort_by(f64::total_cmp);
        let mut found: Vec<f64> = solve_fhf(&corrs).unwrap().iter().map(|s| s.f).collect();
        found.sort_by(f64::total_cmp);
        // The oracle grid covers f in [0.03, 30].
        found.retain(|f| (0.032..31.0).contains(f));
        assert_eq!(oracle.len(), found.len(), "seed {seed}: oracle {oracle:?} solver {found:?}");
        for (a, b) in oracle.iter().zip(&found) {
            assert!((a - b).abs() <= 1e-8 * a, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn fhf_recovers_ground_truth() {
    let inst = scene(2, 1.2, 0.0, 17);
    let sols = solve_fhf(&pair(&inst)).unwrap();
    let best = sols
        .iter()
        .filter_map(|s| evaluate(s, &inst))
        .min_by(|a, b| a.homography.total_cmp(&b.homography))
        .unwrap();
    assert!(best.focal <= 1e-8 && best.homography <= 1e-8, "{best:?}");
}

#[test]
fn fhf_filters_at_least_two_spurious_roots() {
    for seed in 0..200 {
        let inst = scene(2, 1.0 + 0.005 * seed as f64, 0.0, seed);
        let report = solve_fhf_detailed(&pair(&inst)).unwrap();
        assert!(report.real_roots.len() <= 6);
        assert!(report.rejected >= 2, "seed {seed}: {report:?}");
        assert!(report.solutions.len() <= 4);
    }
}

#[test]
fn fhf_accepted_roots_make_m_singular() {
    for seed in 0..50 {
        let inst = scene(2, 1.7, 0.0, seed);
        let corrs = pair(&inst);
        let m = build_fhf_matrix(&corrs);
        for s in solve_fhf(&corrs).unwrap() {
            let mw = m.eval(s.f);
            let sv = mw.singular_values();
            assert!(sv.min() <= 1e-8 * mw.norm(), "seed {seed}: {sv}");
        }
    }
}

#[test]
fn fhf_rejects_pure_rotation_truth() {
    let mut inst = scene(2, 1.0, 0.0, 3);
    // Second view from the first camera center: same points, rotated camera.
    let r2 = inst.correspondences[0].r2;
    for c in &mut inst.correspondences {
        let (a, _) = c.aligned_rays(&inst.intrinsics);
        c.p2 = gravhom::synth::project_point(r2.matrix() * a, &inst.intrinsics).unwrap();
    }
    // The true motion has zero translation and must be rejected; unrelated
    // exact solutions at other focal lengths may remain.
    match solve_fhf(&pair(&inst)) {
        Ok(sols) => assert!(sols.iter().all(|s| (s.f - 1.0).abs() > 1e-3), "{sols:?}"),
        Err(e) => assert!(matches!(e, Error::DegenerateConfiguration(_) | Error::NoSolution)),
    }
}

#[test]
fn frhfr_recovers_distortion_scene() {
    for seed in 0..20 {
        let inst = scene(3, 1.0, -0.3, seed);
        let sols = solve_frhfr(&triple(&inst)).unwrap();
        assert!(sols.len() <= 3);
        let ok = sols.iter().filter_map(|s| evaluate(s, &inst)).any(|e| {
            e.focal <= 1e-6 && e.lambda <= 1e-6 && e.homography <= 1e-6
        });
        assert!(ok, "seed {seed}");
    }
}

#[test]
fn frhfr_does_not_invent_distortion() {
    for seed in 0..20 {
        let inst = scene(3, 1.4, 0.0, seed);
        let sols = solve_frhfr(&triple(&inst)).unwrap();
        assert!(
            sols.iter().any(|s| s.lambda.abs() <= 1e-6 && (s.f - 1.4).abs() <= 1e-6 * 1.4),
            "seed {seed}: {sols:?}"
        );
    }
}

/// Each frHfr solution satisfies the equations it was built from: both DLT
/// equations of the first two correspondences and parallelism of the
/// 1-3 ground segments.
#[test]
fn frhfr_solutions_are_sound() {
    for seed in 0..100 {
        let inst = scene(3, 0.8, -0.4, seed);
        let corrs = triple(&inst);
        for s in solve_frhfr(&corrs).unwrap() {
            let intr = s.intrinsics();
            for c in &corrs[..2] {
                assert!(transfer_residual(c, &s.hy, &intr) <= 1e-6, "seed {seed}");
            }
            let g = |c: &Correspondence| {
                let (a, b) = c.aligned_rays(&intr);
                ([a.x / a.y, a.z / a.y], [b.x / b.y, b.z / b.y])
            };
            let (p1, q1) = g(&corrs[0]);
            let (p3, q3) = g(&corrs[2]);
            let dp = [p3[0] - p1[0], p3[1] - p1[1]];
            let dq = [q3[0] - q1[0], q3[1] - q1[1]];
            let sin = (dp[0] * dq[1] - dp[1] * dq[0]) / (dp[0].hypot(dp[1]) * dq[0].hypot(dq[1]));
            assert!(sin.abs() <= 1e-6, "seed {seed}: {sin}");
        }
    }
}

#[test]
fn eliminated_system_vanishes_at_ground_truth() {
    for seed in 0..20 {
        let inst = scene(3, 1.3, -0.25, seed);
        let sys = build_frhfr_system(&triple(&inst)).unwrap();
        let t = inst.r2.matrix() * inst.hy.translation();
        let (f, l) = (inst.intrinsics.f, inst.intrinsics.lambda);
        for r in sys.residuals(t.x, t.z, f, l) {
            assert!(r.abs() <= 1e-9, "seed {seed}: {r}");
        }
        let t2 = sys.t2_estimates(t.x, f, l);
        for i in 0..3 {
            for j in 0..i {
                assert!((t2[i] - t2[j]).abs() <= 1e-9);
            }
            assert!((t2[i] - t.y).abs() <= 1e-9);
        }
    }
}

#[test]
fn duplicate_correspondences_fail_elimination() {
    let inst = scene(3, 1.0, -0.1, 9);
    let c = inst.correspondences[0];
    assert!(matches!(
        build_frhfr_system(&[c, c, inst.correspondences[1]]),
        Err(Error::EliminationFailure { .. })
    ));
}

#[test]
fn held_out_filter_keeps_truth_and_drops_wrong_focal() {
    let inst = scene(3, 1.1, -0.2, 21);
    let truth = SolverSolution {
        hy: inst.hy,
        f: inst.intrinsics.f,
        lambda: inst.intrinsics.lambda,
        held_out_residual: None,
        tag: SolverKind::Frhfr,
    };
    let wrong = SolverSolution { f: truth.f * 1.5, ..truth };
    let held = HeldOutEquation::new(inst.correspondences[2]);
    let kept = filter_by_unused_equation(vec![truth, wrong], &held, 1e-6);
    assert_eq!(kept, vec![truth]);
}

#[test]
fn composed_truth_transfers_points() {
    let inst = scene(10, 0.9, 0.0, 4);
    let h = compose_homography(&inst.hy, &inst.r1, &inst.r2, &inst.intrinsics).unwrap();
    assert!(homography_error(&h, &inst.h).unwrap() < 1e-12);
    for c in &inst.correspondences {
        let x2 = c.p2.homogeneous();
        let hx1 = h * c.p1.homogeneous();
        assert!(x2.cross(&hx1).norm() <= 1e-12 * hx1.norm());
    }
}

fn scaled(c: &Correspondence, s: f64) -> Correspondence {
    Correspondence {
        p1: ImagePoint::new(c.p1.x * s, c.p1.y * s),
        p2: ImagePoint::new(c.p2.x * s, c.p2.y * s),
        ..*c
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fhf_count_is_scale_invariant(seed in 0u64..10_000, f in 0.5f64..2.5, s in 0.2f64..5.0) {
        let inst = scene(2, f, 0.0, seed);
        let corrs = pair(&inst);
        let base = solve_fhf(&corrs).unwrap();
        let scaled_corrs = [scaled(&corrs[0], s), scaled(&corrs[1], s)];
        let other = solve_fhf(&scaled_corrs).unwrap();
        prop_assert_eq!(base.len(), other.len());
        let mut a: Vec<f64> = base.iter().map(|x| x.f * s).collect();
        let mut b: Vec<f64> = other.iter().map(|x| x.f).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-7 * x, "{} vs {}", x, y);
        }
    }

    #[test]
    fn solver_cardinality(seed in 0u64..1_000_000) {
        let inst = generate(&SceneConfig { n_points: 3, seed, ..SceneConfig::default() }).unwrap();
        if let Ok(s) = solve_frhfr(&triple(&inst)) {
            prop_assert!(s.len() <= 3);
        }
        let plain = generate(&SceneConfig { n_points: 2, seed, lambda_gt: Some(0.0), ..SceneConfig::default() }).unwrap();
        if let Ok(s) = solve_fhf(&pair(&plain)) {
            prop_assert!(s.len() <= 4);
        }
    }
}
