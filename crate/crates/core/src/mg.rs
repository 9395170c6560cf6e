//! Geometric V-cycle multigrid for the step matrix `B = M + τ^α S`.
//!
//! Coarse operators are rediscretized on the nested meshes with `K_ℓ =
//! K_0 2^ℓ`. For nested P1 spaces with exact element matrices this equals
//! the Galerkin product `P^T B P`, which [`MgHierarchy::build`] checks.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::{FemSystem, Mesh2D};
use crate::linalg::{self, BandCholesky, SparseMatrix};

/// Largest tolerated `max |P^T B_{ℓ+1} P - B_ℓ| / max |B_ℓ|`.
pub const GALERKIN_TOLERANCE: f64 = 1e-12;

/// Floor reported for κ when an iteration solves exactly.
pub const KAPPA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmootherKind {
    DampedJacobi { omega: f64 },
    GaussSeidelForward,
}

impl SmootherKind {
    pub fn jacobi(omega: f64) -> Result<Self> {
        let s = SmootherKind::DampedJacobi { omega };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SmootherKind::DampedJacobi { omega } if !(omega > 0.0 && omega <= 1.0) => {
                Err(Error::Config(format!("Jacobi damping {omega} outside (0, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// Short name used in reports: `jacobi` or `gs`.
    pub fn label(&self) -> &'static str {
        match self {
            SmootherKind::DampedJacobi { .. } => "jacobi",
            SmootherKind::GaussSeidelForward => "gs",
        }
    }
}

/// Runs `sweeps` smoothing steps on `matrix x = rhs` in place.
///
/// Jacobi: `x <- x + ω D^{-1} (rhs - B x)`. Gauss–Seidel: one forward
/// lexicographic sweep per count, using updated values immediately.
pub fn smooth(matrix: &SparseMatrix, x: &mut [f64], rhs: &[f64], kind: SmootherKind, sweeps: usize) {
    let diag = linalg::diagonal(matrix);
    smooth_with_diagonal(matrix, &diag, x, rhs, kind, sweeps);
}

fn smooth_with_diagonal(
    matrix: &SparseMatrix,
    diag: &[f64],
    x: &mut [f64],
    rhs: &[f64],
    kind: SmootherKind,
    sweeps: usize,
) {
    let indptr = matrix.indptr();
    let indptr = indptr.raw_storage();
    let indices = matrix.indices();
    let data = matrix.data();
    match kind {
        SmootherKind::DampedJacobi { omega } => {
            let mut r = vec![0.0; x.len()];
            for _ in 0..sweeps {
                linalg::spmv_into(matrix, x, &mut r);
                for i in 0..x.len() {
                    x[i] += omega * (rhs[i] - r[i]) / diag[i];
                }
            }
        }
        SmootherKind::GaussSeidelForward => {
            for _ in 0..sweeps {
                for i in 0..x.len() {
                    let mut s = rhs[i];
                    for k in indptr[i]..indptr[i + 1] {
                        let j = indices[k];
                        if j != i {
                            s -= data[k] * x[j];
                        }
                    }
                    x[i] = s / diag[i];
                }
            }
        }
    }
}

/// Relative residual `‖rhs - Bx‖₂ / ‖rhs‖₂` a direct solve must reach.
pub const DIRECT_TOLERANCE: f64 = 1e-12;

/// An iteration `x <- Φ(x, rhs)` converging to the solution of `B x = rhs`.
pub trait InnerSolver {
    /// The matrix `B`; it also defines the weighted norm `(x^T B x)^{1/2}`.
    fn matrix(&self) -> &SparseMatrix;

    /// One iteration in place.
    fn iterate(&self, x: &mut [f64], rhs: &[f64]) -> Result<()>;

    fn weighted_norm(&self, x: &[f64]) -> f64 {
        linalg::quad_form(self.matrix(), x).max(0.0).sqrt()
    }
}

/// Sparse Cholesky solve of an SPD system, checked to relative residual
/// `1e-12`.
#[derive(Debug, Clone)]
pub struct DirectSolver {
    matrix: SparseMatrix,
    factor: BandCholesky,
}

impl DirectSolver {
    pub fn new(matrix: SparseMatrix) -> Result<Self> {
        let factor = BandCholesky::factor(&matrix)?;
        Ok(Self { matrix, factor })
    }

    /// Cholesky solve followed by up to two steps of iterative refinement
    /// when rounding leaves the residual above tolerance (large meshes with
    /// small `τ^α`).
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.factor.solve(rhs)?;
        let mut r = linalg::relative_residual(&self.matrix, &x, rhs);
        for _ in 0..2 {
            if r <= DIRECT_TOLERANCE {
                return Ok(x);
            }
            let ax = linalg::spmv(&self.matrix, &x);
            let mut d: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            self.factor.solve_in_place(&mut d);
            x.iter_mut().zip(&d).for_each(|(xi, di)| *xi += di);
            r = linalg::relative_residual(&self.matrix, &x, rhs);
        }
        if r > DIRECT_TOLERANCE {
            return Err(Error::Numeric(format!("direct solve residual {r:e} above {DIRECT_TOLERANCE:e}")));
        }
        Ok(x)
    }
}

impl InnerSolver for DirectSolver {
    fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    fn iterate(&self, x: &mut [f64], rhs: &[f64]) -> Result<()> {
        let sol = self.solve(rhs)?;
        x.copy_from_slice(&sol);
        Ok(())
    }
}

/// One-shot direct solve of `B x = rhs`.
pub fn direct_solve(matrix: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    DirectSolver::new(matrix.clone())?.solve(rhs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgConfig {
    pub smoother: SmootherKind,
    pub pre_sweeps: usize,
    pub post_sweeps: usize,
    /// Subdivisions `K_0` of the coarsest mesh.
    pub coarsest: usize,
}

impl Default for MgConfig {
    fn default() -> Self {
        Self {
            smoother: SmootherKind::GaussSeidelForward,
            pre_sweeps: 1,
            post_sweeps: 1,
            coarsest: 4,
        }
    }
}

#[derive(Debug)]
struct Level {
    system: Arc<FemSystem>,
    matrix: SparseMatrix,
    diag: Vec<f64>,
}

/// Nested levels `ℓ = 0..=L` with step matrices, prolongations and a
/// coarse factorization. Immutable after construction.
#[derive(Debug)]
pub struct MgHierarchy {
    levels: Vec<Level>,
    /// `prolongations[ℓ]` maps level `ℓ` to level `ℓ + 1`.
    prolongations: Vec<SparseMatrix>,
    config: MgConfig,
    coarse: BandCholesky,
    tau: f64,
    alpha: f64,
}

/// Number of coarsenings from `fine` down to `coarsest`, if `fine = coarsest 2^L`
/// with `L >= 1`.
fn level_count(fine: usize, coarsest: usize) -> Result<usize> {
    if coarsest < 2 || !coarsest.is_multiple_of(2) {
        return Err(Error::Config(format!("coarsest mesh K0={coarsest} must be even and >= 2")));
    }
    let mut k = fine;
    let mut l = 0;
    while k > coarsest && k.is_multiple_of(2) {
        k /= 2;
        l += 1;
    }
    if k != coarsest || l == 0 {
        return Err(Error::Config(format!(
            "K={fine} is not K0={coarsest} times a positive power of two"
        )));
    }
    Ok(l)
}

/// Linear interpolation from the interior of `coarse` to the interior of
/// the once-refined mesh `fine`.
pub fn prolongation(coarse: &Mesh2D, fine: &Mesh2D) -> Result<SparseMatrix> {
    if fine.subdivisions() != 2 * coarse.subdivisions() {
        return Err(Error::Config("meshes are not one refinement apart".into()));
    }
    let mut triplets = Vec::with_capacity(4 * fine.num_interior());
    for row in 0..fine.num_interior() {
        let (i, j) = fine.interior_vertex(row);
        // Odd indices sit on a coarse edge midpoint; with the bottom-left to
        // top-right diagonal, odd-odd vertices lie on that diagonal.
        let parents: Vec<((usize, usize), f64)> = match (i % 2, j % 2) {
            (0, 0) => vec![((i / 2, j / 2), 1.0)],
            (1, 0) => vec![((i / 2, j / 2), 0.5), ((i / 2 + 1, j / 2), 0.5)],
            (0, 1) => vec![((i / 2, j / 2), 0.5), ((i / 2, j / 2 + 1), 0.5)],
            _ => vec![((i / 2, j / 2), 0.5), ((i / 2 + 1, j / 2 + 1), 0.5)],
        };
        for (v, w) in parents {
            if let Some(col) = coarse.interior_index(v) {
                triplets.push((row, col, w));
            }
        }
    }
    Ok(linalg::csr_from_triplets(fine.num_interior(), coarse.num_interior(), &triplets))
}

impl MgHierarchy {
    pub fn build(fine: Arc<FemSystem>, tau: f64, alpha: f64, config: MgConfig) -> Result<Self> {
        config.smoother.validate()?;
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Config(format!("time step {tau} must be positive")));
        }
        let k_fine = fine.mesh().subdivisions();
        let depth = level_count(k_fine, config.coarsest)?;
        let tau_alpha = tau.powf(alpha);
        let c = fine.diffusivity();

        let mut systems = Vec::with_capacity(depth + 1);
        for l in 0..depth {
            let k = config.coarsest << l;
            systems.push(Arc::new(FemSystem::assemble(Mesh2D::new(k)?, c)?));
        }
        systems.push(fine);

        let levels: Vec<Level> = systems
            .into_iter()
            .map(|system| {
                let matrix = system.step_matrix(tau_alpha);
                let diag = linalg::diagonal(&matrix);
                Level { system, matrix, diag }
            })
            .collect();
        let prolongations = levels
            .windows(2)
            .map(|w| prolongation(w[0].system.mesh(), w[1].system.mesh()))
            .collect::<Result<Vec<_>>>()?;
        let coarse = BandCholesky::factor(&levels[0].matrix)?;
        let h = Self { levels, prolongations, config, coarse, tau, alpha };

        let worst = h.galerkin_deviations().into_iter().fold(0.0, f64::max);
        if worst > GALERKIN_TOLERANCE {
            return Err(Error::Numeric(format!(
                "coarse operator deviates from Galerkin product by {worst:e}"
            )));
        }
        Ok(h)
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn config(&self) -> &MgConfig {
        &self.config
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn fine_system(&self) -> &Arc<FemSystem> {
        &self.levels.last().expect("at least two levels").system
    }

    /// Step matrix on level `ℓ` (0 is coarsest).
    pub fn level_matrix(&self, level: usize) -> &SparseMatrix {
        &self.levels[level].matrix
    }

    pub fn prolongation(&self, level: usize) -> &SparseMatrix {
        &self.prolongations[level]
    }

    /// `max |P^T B_{ℓ+1} P - B_ℓ| / max |B_ℓ|` for every coarse level.
    pub fn galerkin_deviations(&self) -> Vec<f64> {
        (0..self.prolongations.len())
            .map(|l| {
                let galerkin =
                    linalg::galerkin_product(&self.levels[l + 1].matrix, &self.prolongations[l]);
                let direct = &self.levels[l].matrix;
                let scale = direct.data().iter().fold(0.0, |m: f64, v| m.max(v.abs()));
                let diff = &galerkin - direct;
                diff.data().iter().fold(0.0, |m: f64, v| m.max(v.abs())) / scale
            })
            .collect()
    }

    /// One V(ν₁, ν₂) cycle on the finest level starting from `x0`.
    pub fn vcycle(&self, x0: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if x0.len() != n {
            return Err(Error::shape(n, x0.len()));
        }
        if rhs.len() != n {
            return Err(Error::shape(n, rhs.len()));
        }
        let mut x = x0.to_vec();
        self.cycle(self.levels.len() - 1, &mut x, rhs);
        Ok(x)
    }

    pub fn dim(&self) -> usize {
        self.levels.last().map_or(0, |l| l.matrix.rows())
    }

    fn cycle(&self, level: usize, x: &mut [f64], rhs: &[f64]) {
        if level == 0 {
            x.copy_from_slice(rhs);
            self.coarse.solve_in_place(x);
            return;
        }
        let lv = &self.levels[level];
        let cfg = &self.config;
        smooth_with_diagonal(&lv.matrix, &lv.diag, x, rhs, cfg.smoother, cfg.pre_sweeps);
        let mut r = linalg::spmv(&lv.matrix, x);
        for (ri, bi) in r.iter_mut().zip(rhs) {
            *ri = bi - *ri;
        }
        let p = &self.prolongations[level - 1];
        let coarse_rhs = linalg::spmv_transpose(p, &r);
        let mut e = vec![0.0; coarse_rhs.len()];
        self.cycle(level - 1, &mut e, &coarse_rhs);
        let correction = linalg::spmv(p, &e);
        for (xi, ci) in x.iter_mut().zip(&correction) {
            *xi += ci;
        }
        smooth_with_diagonal(&lv.matrix, &lv.diag, x, rhs, cfg.smoother, cfg.post_sweeps);
    }
}

impl InnerSolver for MgHierarchy {
    fn matrix(&self) -> &SparseMatrix {
        self.level_matrix(self.levels.len() - 1)
    }

    fn iterate(&self, x: &mut [f64], rhs: &[f64]) -> Result<()> {
        let n = self.dim();
        if x.len() != n || rhs.len() != n {
            return Err(Error::shape(n, x.len().max(rhs.len())));
        }
        self.cycle(self.levels.len() - 1, x, rhs);
        Ok(())
    }
}

/// Constants of `|x_m - x̄| <= c₀ κ^m |x_0 - x̄|` in the weighted norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionParams {
    pub c0: f64,
    pub kappa: f64,
}

impl ContractionParams {
    pub fn new(c0: f64, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::Config(format!("contraction factor {kappa} outside (0, 1)")));
        }
        if !(c0 >= 1.0 && c0.is_finite()) {
            return Err(Error::Config(format!("contraction prefactor {c0} below 1")));
        }
        Ok(Self { c0, kappa })
    }
}

/// Measures `(c₀, κ)` by iterating on `B x = 0` from seeded random starts.
///
/// κ is the largest per-iteration ratio `|x_m| / |x_{m-1}|` over all trials,
/// ignoring the first iteration; c₀ is the smallest prefactor covering every
/// observed `|x_m| / |x_0|`, clamped to at least one.
pub fn estimate_contraction<S: InnerSolver + ?Sized>(
    solver: &S,
    trials: usize,
    cycles: usize,
    seed: u64,
) -> Result<ContractionParams> {
    if trials == 0 || cycles < 2 {
        return Err(Error::Config("need at least one trial and two cycles".into()));
    }
    let n = solver.matrix().rows();
    let zero = vec![0.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut histories = Vec::with_capacity(trials);
    let mut kappa: f64 = 0.0;
    for _ in 0..trials {
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut norms = vec![solver.weighted_norm(&x)];
        for m in 1..=cycles {
            solver.iterate(&mut x, &zero)?;
            let nm = solver.weighted_norm(&x);
            if m >= 2 && norms[m - 1] > 0.0 {
                kappa = kappa.max(nm / norms[m - 1]);
            }
            norms.push(nm);
            if nm == 0.0 {
                break;
            }
        }
        histories.push(norms);
    }
    if !(kappa < 1.0) {
        return Err(Error::Divergence(format!("measured contraction factor {kappa} >= 1")));
    }
    let kappa = kappa.max(KAPPA_FLOOR);
    let mut c0: f64 = 1.0;
    for norms in &histories {
        for (m, nm) in norms.iter().enumerate().skip(1) {
            c0 = c0.max(nm / norms[0] / kappa.powi(m as i32));
        }
    }
    ContractionParams::new(c0, kappa)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hierarchy(k: usize, tau_alpha: f64, smoother: SmootherKind) -> MgHierarchy {
        let fine = Arc::new(FemSystem::assemble(Mesh2D::new(k).unwrap(), 1.0).unwrap());
        let config = MgConfig { smoother, ..MgConfig::default() };
        // tau^1 with alpha = 1 gives the requested tau^alpha directly
        MgHierarchy::build(fine, tau_alpha, 1.0, config).unwrap()
    }

    #[test]
    fn level_counts() {
        assert_eq!(level_count(8, 2).unwrap(), 2);
        assert_eq!(level_count(64, 4).unwrap(), 4);
        assert!(level_count(6, 4).is_err());
        assert!(level_count(4, 4).is_err());
        assert!(level_count(24, 4).is_err());
        assert!(level_count(16, 3).is_err());
        let fine = Arc::new(FemSystem::assemble(Mesh2D::new(8).unwrap(), 1.0).unwrap());
        let config = MgConfig { coarsest: 2, ..MgConfig::default() };
        assert_eq!(MgHierarchy::build(fine, 0.1, 0.5, config).unwrap().num_levels(), 3);
    }

    #[test]
    fn jacobi_damping_is_validated() {
        assert!(SmootherKind::jacobi(0.0).is_err());
        assert!(SmootherKind::jacobi(1.2).is_err());
        assert!(SmootherKind::jacobi(1.0).is_ok());
    }

    #[test]
    fn jacobi_on_diagonal_system_contracts_by_one_third() {
        let b = linalg::csr_from_triplets(2, 2, &[(0, 0, 2.0), (1, 1, 5.0)]);
        let exact = [1.0, -2.0];
        let rhs = [2.0, -10.0];
        let mut x = [0.0, 0.0];
        smooth(&b, &mut x, &rhs, SmootherKind::DampedJacobi { omega: 2.0 / 3.0 }, 1);
        for k in 0..2 {
            assert!(((x[k] - exact[k]) - (-exact[k] / 3.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn gauss_seidel_matches_hand_sweep() {
        // [4 1; 1 3] x = [1, 2] from x = 0:
        // x0 = 1/4, x1 = (2 - 1/4) / 3 = 7/12
        let b = linalg::csr_from_triplets(
            2,
            2,
            &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)],
        );
        let mut x = [0.0, 0.0];
        smooth(&b, &mut x, &[1.0, 2.0], SmootherKind::GaussSeidelForward, 1);
        assert!((x[0] - 0.25).abs() < 1e-16);
        assert!((x[1] - 7.0 / 12.0).abs() < 1e-16);
    }

    #[test]
    fn smoothers_fix_exact_solutions() {
        let h = hierarchy(16, 0.1, SmootherKind::GaussSeidelForward);
        let b = h.level_matrix(h.num_levels() - 1);
        let xs: Vec<f64> = (0..h.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let rhs = linalg::spmv(b, &xs);
        for kind in [SmootherKind::GaussSeidelForward, SmootherKind::DampedJacobi { omega: 0.7 }] {
            let mut x = xs.clone();
            smooth(b, &mut x, &rhs, kind, 3);
            let err = x.iter().zip(&xs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-13);
        }
    }

    #[test]
    fn direct_solve_zero_and_mismatch() {
        let b = linalg::csr_from_triplets(2, 2, &[(0, 0, 2.0), (1, 1, 5.0)]);
        assert_eq!(direct_solve(&b, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(direct_solve(&b, &[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn prolongation_reproduces_linear_functions() {
        let coarse = Mesh2D::new(4).unwrap();
        let fine = Mesh2D::new(8).unwrap();
        let p = prolongation(&coarse, &fine).unwrap();
        // P e_k is the fine interpolant of coarse hat k
        for col in 0..coarse.num_interior() {
            let mut e = vec![0.0; coarse.num_interior()];
            e[col] = 1.0;
            let pe = linalg::spmv(&p, &e);
            let (ci, cj) = coarse.interior_vertex(col);
            for (row, v) in pe.iter().enumerate() {
                let (fi, fj) = fine.interior_vertex(row);
                let (dx, dy) = (fi as f64 / 2.0 - ci as f64, fj as f64 / 2.0 - cj as f64);
                let want = coarse_hat(dx, dy);
                assert!((v - want).abs() < 1e-15, "{col} {row}");
            }
        }
    }

    fn coarse_hat(dx: f64, dy: f64) -> f64 {
        if dx.abs() >= 1.0 || dy.abs() >= 1.0 || (dx - dy).abs() >= 1.0 {
            0.0
        } else if dx * dy <= 0.0 {
            1.0 - (dx - dy).abs()
        } else {
            1.0 - dx.abs().max(dy.abs())
        }
    }

    #[test]
    fn galerkin_identity_at_k16() {
        let h = hierarchy(16, 0.3, SmootherKind::GaussSeidelForward);
        for d in h.galerkin_deviations() {
            assert!(d <= GALERKIN_TOLERANCE, "{d:e}");
        }
    }

    #[test]
    fn exact_solver_kappa_hits_floor() {
        let sys = FemSystem::assemble(Mesh2D::new(8).unwrap(), 1.0).unwrap();
        let solver = DirectSolver::new(sys.step_matrix(0.1)).unwrap();
        let p = estimate_contraction(&solver, 3, 4, 7).unwrap();
        assert_eq!(p.kappa, KAPPA_FLOOR);
        assert_eq!(p.c0, 1.0);
    }

    #[test]
    fn estimation_needs_two_cycles() {
        let h = hierarchy(8, 0.1, SmootherKind::GaussSeidelForward);
        assert!(estimate_contraction(&h, 1, 1, 0).is_err());
        assert!(estimate_contraction(&h, 0, 5, 0).is_err());
    }
}
