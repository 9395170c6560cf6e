use std::sync::Arc;

use subdiff_core::fem::{FemSystem, Mesh2D};
use subdiff_core::mg::{estimate_contraction, ContractionParams, MgConfig, MgHierarchy, SmootherKind};
use subdiff_core::problems::{example1, example2, smooth_initial, DIFFUSIVITY};
use subdiff_core::stepper::{
    error_report, run_exact, run_iis, IterationSchedule, InitialData, ProblemSpec, Reference, ScheduleRule, Source,
};

type Builder = fn(f64, usize, Arc<FemSystem>) -> subdiff_core::Result<ProblemSpec>;

fn system(k: usize) -> Arc<FemSystem> {
    Arc::new(FemSystem::assemble(Mesh2D::new(k).unwrap(), DIFFUSIVITY).unwrap())
}

fn hierarchy(spec: &ProblemSpec, smoother: SmootherKind) -> MgHierarchy {
    let config = MgConfig { smoother, ..MgConfig::default() };
    MgHierarchy::build(Arc::clone(&spec.system), spec.grid.tau(), spec.alpha.value(), config).unwrap()
}

#[test]
fn many_inner_iterations_reproduce_the_direct_scheme() {
    let sys = system(32);
    for build in [example1 as Builder, example2] {
        let spec = build(0.5, 40, Arc::clone(&sys)).unwrap();
        let exact = run_exact(&spec).unwrap();
        let h = hierarchy(&spec, SmootherKind::jacobi(2.0 / 3.0).unwrap());
        let schedule = IterationSchedule::new(ScheduleRule::Fixed { m: 30 }, 2).unwrap();
        let iis = run_iis(&spec, &schedule, &h).unwrap();
        let e = error_report(&iis, Reference::Final(exact.last()), &sys).unwrap();
        assert!(e.final_error <= 1e-8, "{}", e.final_error);
    }
}

#[test]
fn zero_data_stays_zero_for_every_schedule() {
    let sys = system(16);
    let spec = ProblemSpec {
        initial: InitialData::Zero,
        source: Source::Zero,
        ..example1(0.3, 12, Arc::clone(&sys)).unwrap()
    };
    let params = ContractionParams::new(1.0, 0.3).unwrap();
    let rules = [
        ScheduleRule::Exact,
        ScheduleRule::Fixed { m: 2 },
        ScheduleRule::Log { a: 1, b: 2 },
        ScheduleRule::TheorySmooth { delta: 0.1, params },
        ScheduleRule::TheoryNonsmooth { delta: 0.1, params },
    ];
    for smoother in [SmootherKind::jacobi(2.0 / 3.0).unwrap(), SmootherKind::GaussSeidelForward] {
        let h = hierarchy(&spec, smoother);
        for rule in rules {
            let traj = run_iis(&spec, &IterationSchedule::new(rule, 1).unwrap(), &h).unwrap();
            assert!(traj.states.iter().flatten().all(|&v| v == 0.0), "{rule:?}");
        }
    }
}

#[test]
fn nonsmooth_theory_schedule_front_loads_iterations() {
    let params = ContractionParams::new(1.3, 0.45).unwrap();
    for n_steps in [40usize, 320] {
        let tau = 1.0 / n_steps as f64;
        let schedule =
            IterationSchedule::new(ScheduleRule::TheoryNonsmooth { delta: 0.1, params }, 2).unwrap();
        let counts: Vec<usize> = (3..=n_steps)
            .map(|n| schedule.iterations(n, n as f64 * tau, tau, 0.5).unwrap().unwrap())
            .collect();
        assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{counts:?}");
        assert!(counts[0] > *counts.last().unwrap());
    }
}

#[test]
fn startup_steps_are_marked_exact() {
    let sys = system(16);
    let spec = example2(0.7, 10, Arc::clone(&sys)).unwrap();
    let h = hierarchy(&spec, SmootherKind::GaussSeidelForward);
    for startup in [1, 2, 4] {
        let schedule = IterationSchedule::new(ScheduleRule::Fixed { m: 1 }, startup).unwrap();
        let traj = run_iis(&spec, &schedule, &h).unwrap();
        for r in &traj.records {
            assert_eq!(r.iterations.is_none(), r.n <= startup, "step {}", r.n);
        }
    }
}

/// Within a step, successive inner corrections shrink by at most the
/// measured contraction factor plus a margin.
#[test]
fn inner_corrections_shrink_geometrically() {
    let sys = system(32);
    let spec = example2(0.5, 20, Arc::clone(&sys)).unwrap();
    for smoother in [SmootherKind::jacobi(2.0 / 3.0).unwrap(), SmootherKind::GaussSeidelForward] {
        let h = hierarchy(&spec, smoother);
        let kappa = estimate_contraction(&h, 4, 10, 7).unwrap().kappa;
        let schedule = IterationSchedule::new(ScheduleRule::Fixed { m: 6 }, 2).unwrap();
        let traj = run_iis(&spec, &schedule, &h).unwrap();
        for r in traj.records.iter().filter(|r| r.iterations.is_some()) {
            for w in r.corrections.windows(2) {
                if w[0] > 1e-14 {
                    assert!(w[1] <= (kappa + 0.05) * w[0], "step {}: {:?}", r.n, r.corrections);
                }
            }
        }
    }
}

/// The direct scheme against a run with a four times smaller step.
#[test]
fn direct_scheme_converges_at_first_order() {
    let sys = system(16);
    for build in [example1 as Builder, example2, smooth_initial] {
        for alpha in [0.2, 0.5, 0.8] {
            let errors: Vec<f64> = [20, 40, 80]
                .iter()
                .map(|&n| {
                    let coarse = run_exact(&build(alpha, n, Arc::clone(&sys)).unwrap()).unwrap();
                    let fine = run_exact(&build(alpha, 4 * n, Arc::clone(&sys)).unwrap()).unwrap();
                    error_report(&coarse, Reference::Trajectory(&fine), &sys).unwrap().final_error
                })
                .collect();
            for w in errors.windows(2) {
                let rate = (w[0] / w[1]).log2();
                assert!((rate - 1.0).abs() <= 0.15, "alpha={alpha} rate={rate} {errors:?}");
            }
        }
    }
}
