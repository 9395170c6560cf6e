use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use subdiff_bench::{hierarchy, rhs, system};
use subdiff_core::mg::{DirectSolver, SmootherKind};
use subdiff_core::problems::example1;
use subdiff_core::stepper::{run_exact, run_iis, IterationSchedule, ScheduleRule};

fn vcycle(c: &mut Criterion) {
    let mut group = c.benchmark_group("vcycle");
    for k in [32, 64, 128] {
        let sys = system(k).unwrap();
        let b = rhs(sys.dim());
        let x0 = vec![0.0; sys.dim()];
        for smoother in [SmootherKind::jacobi(2.0 / 3.0).unwrap(), SmootherKind::GaussSeidelForward] {
            let h = hierarchy(&sys, 0.01, 0.5, smoother).unwrap();
            group.bench_with_input(BenchmarkId::new(smoother.label(), k), &k, |bench, _| {
                bench.iter(|| h.vcycle(black_box(&x0), black_box(&b)).unwrap())
            });
        }
    }
    group.finish();
}

fn direct(c: &mut Criterion) {
    let mut group = c.benchmark_group("direct_solve");
    for k in [32, 64, 128] {
        let sys = system(k).unwrap();
        let solver = DirectSolver::new(sys.step_matrix(0.1)).unwrap();
        let b = rhs(sys.dim());
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |bench, _| {
            bench.iter(|| solver.solve(black_box(&b)).unwrap())
        });
    }
    group.finish();
}

/// Whole trajectories: direct steps against two V-cycles per step.
fn trajectory(c: &mut Criterion) {
    let mut group = c.benchmark_group("example1_k64_n40");
    group.sample_size(10);
    let sys = system(64).unwrap();
    let spec = example1(0.5, 40, sys.clone()).unwrap();
    let h = hierarchy(&sys, spec.grid.tau(), 0.5, SmootherKind::GaussSeidelForward).unwrap();
    let schedule = IterationSchedule::new(ScheduleRule::Fixed { m: 2 }, 2).unwrap();
    group.bench_function("exact", |bench| bench.iter(|| run_exact(black_box(&spec)).unwrap()));
    group.bench_function("iis_fixed2", |bench| bench.iter(|| run_iis(black_box(&spec), &schedule, &h).unwrap()));
    group.finish();
}

criterion_group!(benches, vcycle, direct, trajectory);
criterion_main!(benches);
