//! Fixed problem sets shared by the benchmarks.

use gravhom::synth::experiments::scene_for;
use gravhom::synth::{generate_with_rng, instance_rng};
use gravhom::{Correspondence, Intrinsics, SolverKind};

/// `n` noise-free minimal problems for `kind` with the intrinsics the solver
/// is given (ground truth for the calibrated one).
pub fn problems(kind: SolverKind, n: usize, seed: u64) -> Vec<(Vec<Correspondence>, Intrinsics)> {
    let config = scene_for(kind, kind.sample_size());
    (0..n as u64)
        .map(|i| {
            let inst = generate_with_rng(&config, &mut instance_rng(seed, i)).expect("scene generation");
            let known = match kind {
                SolverKind::Calibrated => inst.intrinsics,
                _ => Intrinsics { f: 1.0, lambda: 0.0 },
            };
            (inst.correspondences, known)
        })
        .collect()
}
