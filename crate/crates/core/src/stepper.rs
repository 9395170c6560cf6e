//! Fully discrete backward Euler CQ time stepping.
//!
//! Step `n` solves `(M + τ^α S) Ū^n = τ^α F^n + M (s_n U^0 - Σ_{j=1}^{n} b_j U^{n-j})`,
//! the nodal form of `∂̄_τ^α (U^n - U^0) + A_h U^n = f_h^n`. The exact scheme
//! solves it directly; the incomplete iterative scheme starts from the
//! extrapolation `2U^{n-1} - U^{n-2}` and keeps the iterate after `M_n`
//! inner iterations.

use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::cq::{FracOrder, TimeGrid, WeightTable};
use crate::error::{Error, Result};
use crate::fem::{FemSystem, RitzData};
use crate::linalg;
use crate::mg::{ContractionParams, DirectSolver, InnerSolver, MgHierarchy};

pub type ScalarField = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type GradientField = Arc<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>;
/// `f(t, x, y)`.
pub type SourceField = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Upper clamp on inner iterations per step.
pub const MAX_INNER_ITERATIONS: usize = 200;

/// How the discrete initial value `v_h` is obtained from `v`.
#[derive(Clone)]
pub enum InitialData {
    Zero,
    /// `v_h = P_h v`.
    L2Projection(ScalarField),
    /// `v_h = R_h v`, given `∇v`.
    RitzProjection(GradientField),
}

#[derive(Clone)]
pub enum Source {
    Zero,
    Field(SourceField),
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub alpha: FracOrder,
    pub grid: TimeGrid,
    pub system: Arc<FemSystem>,
    pub initial: InitialData,
    pub source: Source,
}

impl ProblemSpec {
    pub fn tau_alpha(&self) -> f64 {
        self.grid.tau().powf(self.alpha.value())
    }

    pub fn initial_vector(&self) -> Result<Vec<f64>> {
        match &self.initial {
            InitialData::Zero => Ok(vec![0.0; self.system.dim()]),
            InitialData::L2Projection(v) => self.system.l2_project(|x, y| v(x, y)),
            InitialData::RitzProjection(grad) => {
                let g = |x: f64, y: f64| grad(x, y);
                self.system.ritz_project(RitzData::Gradient(&g))
            }
        }
    }

    /// `F^n_i = ∫ f(t_n) φ_i`, or `None` for a zero source.
    pub fn load_at(&self, n: usize) -> Result<Option<Vec<f64>>> {
        match &self.source {
            Source::Zero => Ok(None),
            Source::Field(f) => {
                let t = self.grid.time(n);
                self.system.load_vector(|x, y| f(t, x, y)).map(Some)
            }
        }
    }

    pub fn weights(&self) -> Result<WeightTable> {
        WeightTable::generate(self.alpha, self.grid.steps())
    }
}

/// Rule giving the number `M_n` of inner iterations at step `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleRule {
    /// Solve every step directly (`M_n = ∞`).
    Exact,
    Fixed { m: usize },
    /// `M_n = a + ⌈b log₂(1/t_n)⌉`.
    Log { a: usize, b: usize },
    /// Smallest `M` with `c₀ κ^M <= δ ℓ_n^{-1} min(t_n^{α/2}, 1)`.
    TheorySmooth { delta: f64, params: ContractionParams },
    /// Smallest `M` with `c₀ κ^M <= δ min(t_n, 1) ℓ_n^{-1}`.
    TheoryNonsmooth { delta: f64, params: ContractionParams },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationSchedule {
    pub rule: ScheduleRule,
    /// Steps `1..=exact_startup_steps` are always solved directly.
    pub exact_startup_steps: usize,
}

/// `ℓ_n = ln(1 + t_n / τ)`.
pub fn log_factor(t_n: f64, tau: f64) -> f64 {
    (t_n / tau).ln_1p()
}

fn smallest_power_below(params: &ContractionParams, threshold: f64) -> usize {
    let mut m = 0;
    let mut v = params.c0;
    while v > threshold && m < MAX_INNER_ITERATIONS {
        v *= params.kappa;
        m += 1;
    }
    m
}

impl IterationSchedule {
    pub fn new(rule: ScheduleRule, exact_startup_steps: usize) -> Result<Self> {
        if exact_startup_steps == 0 {
            return Err(Error::Config("at least one exact start-up step is required".into()));
        }
        match rule {
            ScheduleRule::Fixed { m: 0 } => {
                return Err(Error::Config("fixed schedule needs m >= 1".into()))
            }
            ScheduleRule::Log { a: 0, b: 0 } => {
                return Err(Error::Config("log schedule needs a + b >= 1".into()))
            }
            ScheduleRule::TheorySmooth { delta, params }
            | ScheduleRule::TheoryNonsmooth { delta, params } => {
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(Error::Config(format!("tolerance δ={delta} outside (0, 1)")));
                }
                ContractionParams::new(params.c0, params.kappa)?;
            }
            _ => {}
        }
        Ok(Self { rule, exact_startup_steps })
    }

    pub fn exact() -> Self {
        Self { rule: ScheduleRule::Exact, exact_startup_steps: 2 }
    }

    /// `M_n` for a step past the start-up phase, or `None` for a direct
    /// solve. Counts are clamped to `[1, MAX_INNER_ITERATIONS]`.
    pub fn iterations(&self, n: usize, t_n: f64, tau: f64, alpha: f64) -> Result<Option<usize>> {
        if n <= self.exact_startup_steps {
            return Err(Error::State(format!(
                "step {n} lies in the exact start-up phase ({} steps)",
                self.exact_startup_steps
            )));
        }
        let raw = match self.rule {
            ScheduleRule::Exact => return Ok(None),
            ScheduleRule::Fixed { m } => m,
            ScheduleRule::Log { a, b } => {
                let l = (1.0 / t_n).max(1.0).log2();
                // absorb rounding in t_n = n τ so exact powers of two stay exact
                a + (b as f64 * l - 1e-9).ceil().max(0.0) as usize
            }
            ScheduleRule::TheorySmooth { delta, params } => {
                check_kappa(&params)?;
                let thr = delta / log_factor(t_n, tau) * t_n.powf(alpha / 2.0).min(1.0);
                smallest_power_below(&params, thr)
            }
            ScheduleRule::TheoryNonsmooth { delta, params } => {
                check_kappa(&params)?;
                let thr = delta * t_n.min(1.0) / log_factor(t_n, tau);
                smallest_power_below(&params, thr)
            }
        };
        if raw >= MAX_INNER_ITERATIONS {
            log::warn!("step {n}: schedule asks for {raw} iterations, clamped to {MAX_INNER_ITERATIONS}");
        }
        Ok(Some(raw.clamp(1, MAX_INNER_ITERATIONS)))
    }
}

fn check_kappa(p: &ContractionParams) -> Result<()> {
    if p.kappa > 0.0 && p.kappa < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("contraction factor {} outside (0, 1)", p.kappa)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub n: usize,
    /// Inner iterations used; `None` for a direct solve.
    pub iterations: Option<usize>,
    /// Weighted norm of the last inner correction `|U^{n,M} - U^{n,M-1}|`,
    /// zero for direct solves.
    pub correction: f64,
    /// Weighted norms of every inner correction, in order.
    pub corrections: Vec<f64>,
    pub wall_time: Duration,
}

/// Nodal states `U^0 ..= U^N` with one record per step `1..=N`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<Vec<f64>>,
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory holds U^0")
    }

    pub fn total_iterations(&self) -> usize {
        self.records.iter().filter_map(|r| r.iterations).sum()
    }

    pub fn wall_time(&self) -> Duration {
        self.records.iter().map(|r| r.wall_time).sum()
    }

    /// Writes `n,t_n,M_n,l2_norm,weighted_correction` rows; `M_n` reads
    /// `exact` for direct solves and `0` is the initial state.
    pub fn write_checkpoints<W: Write>(&self, sys: &FemSystem, mut out: W) -> Result<()> {
        writeln!(out, "n,t_n,M_n,l2_norm,weighted_correction")?;
        writeln!(out, "0,{:.5e},,{:.5e},", 0.0, sys.l2_norm(&self.states[0]))?;
        for r in &self.records {
            let m = r.iterations.map_or_else(|| "exact".to_string(), |m| m.to_string());
            writeln!(
                out,
                "{},{:.5e},{},{:.5e},{:.5e}",
                r.n,
                self.grid.time(r.n),
                m,
                sys.l2_norm(&self.states[r.n]),
                r.correction
            )?;
        }
        Ok(())
    }
}

/// `acc = s_n U^0 - Σ_{j=1}^{n} b_j U^{n-j}` over `history = U^0 ..= U^{n-1}`.
///
/// Blocked over the unknowns so the accumulator stays in cache while the
/// history streams past.
fn history_combination(weights: &[f64], s_n: f64, history: &[Vec<f64>]) -> Vec<f64> {
    const BLOCK: usize = 512;
    let n = history.len();
    let dim = history[0].len();
    let mut acc: Vec<f64> = history[0].iter().map(|u| s_n * u).collect();
    for start in (0..dim).step_by(BLOCK) {
        let end = (start + BLOCK).min(dim);
        let out = &mut acc[start..end];
        for j in 1..=n {
            let b = weights[j];
            let u = &history[n - j][start..end];
            for (a, v) in out.iter_mut().zip(u) {
                *a -= b * v;
            }
        }
    }
    acc
}

/// Right-hand side of step `n = history.len()`:
/// `τ^α F^n + M (s_n U^0 - Σ_{j=1}^{n} b_j U^{n-j})`.
pub fn step_rhs(
    spec: &ProblemSpec,
    weights: &WeightTable,
    history: &[Vec<f64>],
    load: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let n = history.len();
    if n == 0 {
        return Err(Error::State("history must contain at least U^0".into()));
    }
    if weights.horizon() < n {
        return Err(Error::State(format!(
            "weights known to index {} but step {n} needs more",
            weights.horizon()
        )));
    }
    let dim = spec.system.dim();
    if let Some(bad) = history.iter().find(|u| u.len() != dim) {
        return Err(Error::shape(dim, bad.len()));
    }
    let b = weights.weights();
    let s_n: f64 = b[..=n].iter().sum();
    let comb = history_combination(b, s_n, history);
    let mut rhs = linalg::spmv(spec.system.mass(), &comb);
    if let Some(f) = load {
        if f.len() != dim {
            return Err(Error::shape(dim, f.len()));
        }
        let ta = spec.tau_alpha();
        for (r, fi) in rhs.iter_mut().zip(f) {
            *r += ta * fi;
        }
    }
    Ok(rhs)
}

/// Backward Euler CQ with every step solved directly.
pub fn run_exact(spec: &ProblemSpec) -> Result<Trajectory> {
    let solver = DirectSolver::new(spec.system.step_matrix(spec.tau_alpha()))?;
    march(spec, |_, _, rhs| {
        let x = solver.solve(rhs)?;
        Ok((x, None, Vec::new()))
    })
}

/// The incomplete iterative scheme with multigrid inner iterations.
pub fn run_iis(spec: &ProblemSpec, schedule: &IterationSchedule, mg: &MgHierarchy) -> Result<Trajectory> {
    run_iis_with(spec, schedule, mg)
}

/// The incomplete iterative scheme with any contractive inner solver for
/// `M + τ^α S`.
pub fn run_iis_with<S: InnerSolver + ?Sized>(
    spec: &ProblemSpec,
    schedule: &IterationSchedule,
    inner: &S,
) -> Result<Trajectory> {
    let dim = spec.system.dim();
    if inner.matrix().rows() != dim {
        return Err(Error::shape(dim, inner.matrix().rows()));
    }
    let ta = spec.tau_alpha();
    let direct = DirectSolver::new(spec.system.step_matrix(ta))?;
    let tau = spec.grid.tau();
    let alpha = spec.alpha.value();
    march(spec, |n, history, rhs| {
        let count = if n <= schedule.exact_startup_steps {
            None
        } else {
            match schedule.iterations(n, spec.grid.time(n), tau, alpha)? {
                Some(0) => return Err(Error::Config(format!("schedule gives zero iterations at step {n}"))),
                other => other,
            }
        };
        let Some(count) = count else {
            return Ok((direct.solve(rhs)?, None, Vec::new()));
        };
        let prev = &history[n - 1];
        let prev2 = &history[n - 2];
        let mut x: Vec<f64> = prev.iter().zip(prev2).map(|(a, b)| 2.0 * a - b).collect();
        let mut corrections = Vec::with_capacity(count);
        let mut last = x.clone();
        for _ in 0..count {
            inner.iterate(&mut x, rhs)?;
            let d: Vec<f64> = x.iter().zip(&last).map(|(a, b)| a - b).collect();
            let c = inner.weighted_norm(&d);
            if let Some(&first) = corrections.first() {
                if c > 10.0 * first && c > f64::MIN_POSITIVE {
                    return Err(Error::Divergence(format!(
                        "inner correction grew from {first:e} to {c:e} at step {n}"
                    )));
                }
            }
            if !c.is_finite() {
                return Err(Error::Divergence(format!("non-finite iterate at step {n}")));
            }
            corrections.push(c);
            last.copy_from_slice(&x);
        }
        Ok((x, Some(count), corrections))
    })
}

type StepOutcome = (Vec<f64>, Option<usize>, Vec<f64>);

fn march<F>(spec: &ProblemSpec, mut step: F) -> Result<Trajectory>
where
    F: FnMut(usize, &[Vec<f64>], &[f64]) -> Result<StepOutcome>,
{
    let n_steps = spec.grid.steps();
    let weights = spec.weights()?;
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(spec.initial_vector()?);
    let mut records = Vec::with_capacity(n_steps);
    for n in 1..=n_steps {
        let start = Instant::now();
        let load = spec.load_at(n)?;
        let rhs = step_rhs(spec, &weights, &states, load.as_deref())?;
        let (x, iterations, corrections) = step(n, &states, &rhs)?;
        states.push(x);
        records.push(StepRecord {
            n,
            iterations,
            correction: corrections.last().copied().unwrap_or(0.0),
            corrections,
            wall_time: start.elapsed(),
        });
    }
    Ok(Trajectory { grid: spec.grid, states, records })
}

/// What an error is measured against.
pub enum Reference<'a> {
    /// The reference state at `t_N = T` only.
    Final(&'a [f64]),
    /// A reference trajectory on a grid whose step count is a multiple of
    /// the measured one; every coinciding time level becomes a checkpoint.
    Trajectory(&'a Trajectory),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// `e^N = ‖U^N - u_h(t_N)‖ / ‖u_h(t_N)‖` in `L²`.
    pub final_error: f64,
    /// `(n, t_n, relative error)` at coinciding levels.
    pub checkpoints: Vec<(usize, f64, f64)>,
}

fn relative_error(sys: &FemSystem, x: &[f64], reference: &[f64]) -> Result<f64> {
    if x.len() != reference.len() {
        return Err(Error::shape(reference.len(), x.len()));
    }
    let denom = sys.l2_norm(reference);
    if denom == 0.0 {
        return Err(Error::UndefinedMetric("reference has zero L2 norm".into()));
    }
    let d: Vec<f64> = x.iter().zip(reference).map(|(a, b)| a - b).collect();
    Ok(sys.l2_norm(&d) / denom)
}

pub fn error_report(traj: &Trajectory, reference: Reference<'_>, sys: &FemSystem) -> Result<ErrorReport> {
    match reference {
        Reference::Final(r) => Ok(ErrorReport {
            final_error: relative_error(sys, traj.last(), r)?,
            checkpoints: Vec::new(),
        }),
        Reference::Trajectory(rt) => {
            let (n, n_ref) = (traj.grid.steps(), rt.grid.steps());
            if n_ref % n != 0 || (rt.grid.t_final() - traj.grid.t_final()).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "reference grid with {n_ref} steps does not refine {n} steps"
                )));
            }
            let ratio = n_ref / n;
            let mut checkpoints = Vec::with_capacity(n);
            for k in 1..=n {
                let reference = &rt.states[k * ratio];
                if sys.l2_norm(reference) == 0.0 {
                    continue;
                }
                let e = relative_error(sys, &traj.states[k], reference)?;
                checkpoints.push((k, traj.grid.time(k), e));
            }
            Ok(ErrorReport {
                final_error: relative_error(sys, traj.last(), rt.last())?,
                checkpoints,
            })
        }
    }
}
