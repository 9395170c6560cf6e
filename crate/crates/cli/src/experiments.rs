//! Convergence studies and contraction sweeps.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use subdiff_core::cq::{FracOrder, WeightTable};
use subdiff_core::fem::{FemSystem, Mesh2D};
use subdiff_core::mg::{estimate_contraction, ContractionParams, DirectSolver, MgConfig, MgHierarchy, SmootherKind};
use subdiff_core::problems;
use subdiff_core::stepper::{
    error_report, run_exact, run_iis, IterationSchedule, ProblemSpec, Reference, ScheduleRule,
};
use subdiff_core::{Error, Result};

use crate::config::{ExampleKind, ExperimentConfig, ReferenceMode, ScheduleSpec};
use crate::table::{Cell, ErrorTable};

type SystemKey = (usize, u64);
type ReferenceKey = (ExampleKind, u64, usize, u64, usize);

type Slot<V> = Arc<Mutex<Option<Arc<V>>>>;

/// Per-key slots so that each expensive object is built once even when
/// several studies ask for it.
struct Cache<K, V> {
    slots: Mutex<HashMap<K, Slot<V>>>,
}

impl<K: std::hash::Hash + Eq, V> Cache<K, V> {
    fn new() -> Self {
        Self { slots: Mutex::new(HashMap::new()) }
    }

    fn get_or_try_init(&self, key: K, init: impl FnOnce() -> Result<V>) -> Result<Arc<V>> {
        let slot = {
            let mut slots = self.slots.lock().expect("cache lock poisoned");
            Arc::clone(slots.entry(key).or_default())
        };
        let mut value = slot.lock().expect("cache slot poisoned");
        if let Some(v) = value.as_ref() {
            return Ok(Arc::clone(v));
        }
        let v = Arc::new(init()?);
        *value = Some(Arc::clone(&v));
        Ok(v)
    }
}

fn systems() -> &'static Cache<SystemKey, FemSystem> {
    static CACHE: OnceLock<Cache<SystemKey, FemSystem>> = OnceLock::new();
    CACHE.get_or_init(Cache::new)
}

fn references() -> &'static Cache<ReferenceKey, Vec<f64>> {
    static CACHE: OnceLock<Cache<ReferenceKey, Vec<f64>>> = OnceLock::new();
    CACHE.get_or_init(Cache::new)
}

/// Assembled system for `K` subdivisions and diffusivity `c`, shared
/// process-wide.
pub fn fem_system(k: usize, diffusivity: f64) -> Result<Arc<FemSystem>> {
    systems().get_or_try_init((k, diffusivity.to_bits()), || {
        FemSystem::assemble(Mesh2D::new(k)?, diffusivity)
    })
}

pub fn problem(example: ExampleKind, alpha: f64, steps: usize, system: Arc<FemSystem>) -> Result<ProblemSpec> {
    match example {
        ExampleKind::One => problems::example1(alpha, steps, system),
        ExampleKind::Two => problems::example2(alpha, steps, system),
        ExampleKind::Custom => problems::smooth_initial(alpha, steps, system),
    }
}

/// Final-time reference state `u_h(T)` for one `α`.
pub fn reference_state(config: &ExperimentConfig, alpha: f64, system: &Arc<FemSystem>) -> Result<Arc<Vec<f64>>> {
    match &config.reference {
        ReferenceMode::FineBackwardEuler { steps } => {
            let key = (config.example, alpha.to_bits(), config.k, config.diffusivity.to_bits(), *steps);
            references().get_or_try_init(key, || {
                log::info!("reference: {} alpha={alpha} K={} N_ref={steps}", config.example.name(), config.k);
                let start = Instant::now();
                let spec = problem(config.example, alpha, *steps, Arc::clone(system))?;
                let mut traj = run_exact(&spec)?;
                log::info!("reference done in {:.1?}", start.elapsed());
                Ok(traj.states.pop().expect("trajectory holds U^0"))
            })
        }
        ReferenceMode::External(path) => {
            let all = read_reference_file(path)?;
            let v = all
                .get(&alpha.to_bits())
                .ok_or_else(|| Error::Config(format!("{} has no reference for alpha={alpha}", path.display())))?;
            if v.len() != system.dim() {
                return Err(Error::Config(format!(
                    "reference for alpha={alpha} has {} nodes, mesh has {}",
                    v.len(),
                    system.dim()
                )));
            }
            Ok(Arc::new(v.clone()))
        }
    }
}

/// Reads `alpha,node,value` rows (header optional) into per-`α` vectors.
pub fn read_reference_file(path: &Path) -> Result<BTreeMap<u64, Vec<f64>>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Config(format!("cannot open reference {}: {e}", path.display())))?;
    let mut out: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("alpha") {
            continue;
        }
        let bad = || Error::Data(format!("{}:{}: expected alpha,node,value", path.display(), i + 1));
        let mut parts = line.split(',');
        let (Some(a), Some(node), Some(v), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(bad());
        };
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        let node: usize = node.trim().parse().map_err(|_| bad())?;
        let v: f64 = v.trim().parse().map_err(|_| bad())?;
        let vec = out.entry(a.to_bits()).or_default();
        if node != vec.len() {
            return Err(Error::Data(format!("{}:{}: nodes must be listed in order", path.display(), i + 1)));
        }
        vec.push(v);
    }
    Ok(out)
}

pub fn write_reference_file<W: Write>(states: &[(f64, Arc<Vec<f64>>)], mut out: W) -> Result<()> {
    writeln!(out, "alpha,node,value")?;
    for (alpha, v) in states {
        for (i, x) in v.iter().enumerate() {
            writeln!(out, "{alpha},{i},{x:e}")?;
        }
    }
    Ok(())
}

/// Contraction measurement on a hierarchy, seeded per configuration.
pub fn measure_contraction(config: &ExperimentConfig, hierarchy: &MgHierarchy) -> Result<ContractionParams> {
    estimate_contraction(hierarchy, config.contraction_trials, config.contraction_cycles, config.seed)
}

fn schedule_for(spec: &ScheduleSpec, startup: usize, params: Option<ContractionParams>) -> Result<IterationSchedule> {
    let need = || params.ok_or_else(|| Error::State("theory schedule without contraction estimate".into()));
    let rule = match *spec {
        ScheduleSpec::Exact => ScheduleRule::Exact,
        ScheduleSpec::Fixed(m) => ScheduleRule::Fixed { m },
        ScheduleSpec::Log { a, b } => ScheduleRule::Log { a, b },
        ScheduleSpec::TheorySmooth(delta) => ScheduleRule::TheorySmooth { delta, params: need()? },
        ScheduleSpec::TheoryNonsmooth(delta) => ScheduleRule::TheoryNonsmooth { delta, params: need()? },
    };
    IterationSchedule::new(rule, startup)
}

/// Runs every `(α, schedule, N)` cell of the configured study.
pub fn run_table(config: &ExperimentConfig) -> Result<ErrorTable> {
    config.validate()?;
    let system = fem_system(config.k, config.diffusivity)?;
    let mut table = ErrorTable::new(config.header_lines());
    let iterative = config.schedules.iter().any(|s| !s.is_exact());
    let theory = config.schedules.iter().any(ScheduleSpec::needs_contraction);
    for &alpha in &config.alphas {
        let reference = reference_state(config, alpha, &system)?;
        for &n in &config.steps {
            let spec = problem(config.example, alpha, n, Arc::clone(&system))?;
            let hierarchy = if iterative {
                Some(MgHierarchy::build(Arc::clone(&system), spec.grid.tau(), alpha, config.mg_config())?)
            } else {
                None
            };
            let params = match (&hierarchy, theory) {
                (Some(h), true) => Some(measure_contraction(config, h)?),
                _ => None,
            };
            for row in &config.schedules {
                let start = Instant::now();
                let traj = match (&hierarchy, row) {
                    (Some(h), s) if !s.is_exact() => {
                        run_iis(&spec, &schedule_for(s, config.startup_exact, params)?, h)?
                    }
                    _ => run_exact(&spec)?,
                };
                let error = error_report(&traj, Reference::Final(&reference), &system)?.final_error;
                let cell = Cell {
                    alpha,
                    row: row.to_string(),
                    steps: n,
                    error,
                    iterations: traj.total_iterations(),
                    wall_time: start.elapsed(),
                };
                log::info!(
                    "alpha={alpha} {row} N={n}: e={error:.3e} iterations={} in {:.2?}",
                    cell.iterations,
                    cell.wall_time
                );
                table.push(cell);
            }
        }
    }
    Ok(table)
}

/// Zero initial data with a smooth source; direct and fixed-count rows.
pub fn run_example1(config: &ExperimentConfig) -> Result<ErrorTable> {
    let mut c = config.clone();
    c.example = ExampleKind::One;
    run_table(&c)
}

/// Discontinuous initial data projected with `P_h`; logarithmic schedules.
pub fn run_example2(config: &ExperimentConfig) -> Result<ErrorTable> {
    let mut c = config.clone();
    c.example = ExampleKind::Two;
    run_table(&c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionRow {
    pub alpha: f64,
    pub tau: f64,
    pub k: usize,
    pub smoother: &'static str,
    pub pre_sweeps: usize,
    pub post_sweeps: usize,
    pub params: ContractionParams,
}

/// Measures `(c₀, κ)` for Jacobi, Gauss–Seidel and the direct solver at every
/// `(α, N)` of the configuration. Fails on the first `κ >= 1`.
pub fn run_contraction_sweep(config: &ExperimentConfig) -> Result<Vec<ContractionRow>> {
    config.validate_study()?;
    let system = fem_system(config.k, config.diffusivity)?;
    let smoothers = [SmootherKind::jacobi(config.omega)?, SmootherKind::GaussSeidelForward];
    let mut rows = Vec::new();
    for &alpha in &config.alphas {
        let order = FracOrder::caputo(alpha)?;
        for &n in &config.steps {
            let tau = 1.0 / n as f64;
            for smoother in smoothers {
                let mg = MgConfig { smoother, ..config.mg_config() };
                let h = MgHierarchy::build(Arc::clone(&system), tau, order.value(), mg)?;
                let params = measure_contraction(config, &h)?;
                rows.push(ContractionRow {
                    alpha,
                    tau,
                    k: config.k,
                    smoother: smoother.label(),
                    pre_sweeps: config.pre_sweeps,
                    post_sweeps: config.post_sweeps,
                    params,
                });
            }
            let direct = DirectSolver::new(system.step_matrix(tau.powf(alpha)))?;
            let params =
                estimate_contraction(&direct, config.contraction_trials, config.contraction_cycles, config.seed)?;
            rows.push(ContractionRow {
                alpha,
                tau,
                k: config.k,
                smoother: "exact",
                pre_sweeps: 0,
                post_sweeps: 0,
                params,
            });
        }
    }
    Ok(rows)
}

pub fn write_contraction_csv<W: Write>(seed: u64, rows: &[ContractionRow], mut out: W) -> Result<()> {
    writeln!(out, "# seed={seed}")?;
    writeln!(out, "alpha,tau,K,smoother,nu1,nu2,kappa,c0")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.5e},{},{},{},{},{:.5e},{:.5e}",
            r.alpha, r.tau, r.k, r.smoother, r.pre_sweeps, r.post_sweeps, r.params.kappa, r.params.c0
        )?;
    }
    Ok(())
}

/// `j,b_j,bound` for `j = 0..=n_max`.
pub fn write_weights<W: Write>(gamma: f64, n_max: usize, mut out: W) -> Result<()> {
    let table = WeightTable::generate(FracOrder::new(gamma)?, n_max)?;
    writeln!(out, "j,b_j,bound")?;
    for (j, b) in table.weights().iter().enumerate() {
        writeln!(out, "{j},{b:.5e},{:.5e}", table.magnitude_bound(j))?;
    }
    Ok(())
}
