use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use gravhom::solvers::solve_minimal;
use gravhom::SolverKind;
use gravhom_bench::problems;

const PROBLEMS: usize = 1_000;

fn minimal_solvers(c: &mut Criterion) {
    let mut group = c.benchmark_group("minimal");
    group.throughput(Throughput::Elements(PROBLEMS as u64));
    for kind in SolverKind::ALL {
        let set = problems(kind, PROBLEMS, 7);
        group.bench_function(kind.name(), |b| {
            b.iter(|| {
                for (corrs, known) in &set {
                    let _ = black_box(solve_minimal(kind, black_box(corrs), known));
                }
            })
        });
    }
    group.finish();
}

criterion_group!(benches, minimal_solvers);
criterion_main!(benches);
