//! Piecewise-linear finite elements on a uniform triangulation of the square.

mod mesh;
mod quadrature;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use sprs::CsMat;

pub use mesh::{Mesh2D, Vertex};
pub use quadrature::DEGREE4_RULE;

use crate::error::{Error, Result};
use crate::linalg::{self, BandCholesky, SparseMatrix};

/// Right-hand side for the Ritz projection.
pub enum RitzData<'a> {
    /// `∇v`; the load is `c_A ∫ ∇v · ∇φ_i`.
    Gradient(&'a dyn Fn(f64, f64) -> (f64, f64)),
    /// `A v = -c_A Δv`; the load is `∫ (A v) φ_i`.
    Operator(&'a dyn Fn(f64, f64) -> f64),
}

/// Mass and stiffness matrices over the interior vertices of a mesh.
///
/// The stiffness matrix already carries the diffusivity `c_A` of
/// `A = -c_A Δ`. In nodal coordinates the discrete operator is `M^{-1} S`.
#[derive(Debug)]
pub struct FemSystem {
    mesh: Mesh2D,
    diffusivity: f64,
    mass: SparseMatrix,
    stiffness: SparseMatrix,
    mass_factor: OnceLock<BandCholesky>,
    stiffness_factor: OnceLock<BandCholesky>,
}

/// Local edge vectors in units of `h`: `e_k = p_{k+2} - p_{k+1}`.
fn edge_vectors(t: &[Vertex; 3]) -> [(i64, i64); 3] {
    let p = t.map(|(i, j)| (i as i64, j as i64));
    std::array::from_fn(|k| {
        let a = p[(k + 1) % 3];
        let b = p[(k + 2) % 3];
        (b.0 - a.0, b.1 - a.1)
    })
}

impl FemSystem {
    pub fn assemble(mesh: Mesh2D, diffusivity: f64) -> Result<Self> {
        if !(diffusivity.is_finite() && diffusivity > 0.0) {
            return Err(Error::Config(format!("diffusivity {diffusivity} must be positive")));
        }
        let h2 = mesh.h() * mesh.h();
        // Every triangle has twice-area 1 in units of h^2, so the element
        // stiffness is (e_k · e_l) / 2, independent of h.
        let mut entries: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
        for t in mesh.triangles() {
            let e = edge_vectors(t);
            let idx = t.map(|v| mesh.interior_index(v));
            for a in 0..3 {
                let Some(ia) = idx[a] else { continue };
                for b in 0..3 {
                    let Some(ib) = idx[b] else { continue };
                    let m = if a == b { h2 / 12.0 } else { h2 / 24.0 };
                    let dot = e[a].0 * e[b].0 + e[a].1 * e[b].1;
                    let s = diffusivity * (dot as f64) * 0.5;
                    let slot = entries.entry((ia, ib)).or_insert((0.0, 0.0));
                    slot.0 += m;
                    slot.1 += s;
                }
            }
        }
        let n = mesh.num_interior();
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut mass = Vec::with_capacity(entries.len());
        let mut stiff = Vec::with_capacity(entries.len());
        for (&(i, j), &(m, s)) in &entries {
            indptr[i + 1] += 1;
            indices.push(j);
            mass.push(m);
            stiff.push(s);
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        let mass = CsMat::new((n, n), indptr.clone(), indices.clone(), mass);
        let stiffness = CsMat::new((n, n), indptr, indices, stiff);
        Ok(Self {
            mesh,
            diffusivity,
            mass,
            stiffness,
            mass_factor: OnceLock::new(),
            stiffness_factor: OnceLock::new(),
        })
    }

    pub fn mesh(&self) -> &Mesh2D {
        &self.mesh
    }

    pub fn diffusivity(&self) -> f64 {
        self.diffusivity
    }

    pub fn dim(&self) -> usize {
        self.mesh.num_interior()
    }

    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    /// `M + τ^α S`, the matrix of every time step.
    pub fn step_matrix(&self, tau_alpha: f64) -> SparseMatrix {
        linalg::add_scaled_same_pattern(&self.mass, &self.stiffness, tau_alpha)
            .expect("mass and stiffness share a pattern")
    }

    /// `F_i = ∫ g φ_i` by the degree-4 rule on every triangle.
    pub fn load_vector(&self, g: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
        load_vector(&self.mesh, g)
    }

    fn gradient_load(&self, grad: &dyn Fn(f64, f64) -> (f64, f64)) -> Result<Vec<f64>> {
        let mesh = &self.mesh;
        let h = mesh.h();
        let area = mesh.triangle_area();
        let mut out = vec![0.0; mesh.num_interior()];
        for t in mesh.triangles() {
            let pts = t.map(|v| mesh.point(v));
            let e = edge_vectors(t);
            // ∇λ_k = (-e_k.y, e_k.x) h / (2 area)
            let grads = e.map(|(ex, ey)| {
                let s = h / (2.0 * area);
                (-(ey as f64) * s, ex as f64 * s)
            });
            let idx = t.map(|v| mesh.interior_index(v));
            let mut avg = (0.0, 0.0);
            for (l, w) in DEGREE4_RULE.iter() {
                let x = l[0] * pts[0].0 + l[1] * pts[1].0 + l[2] * pts[2].0;
                let y = l[0] * pts[0].1 + l[1] * pts[1].1 + l[2] * pts[2].1;
                let (gx, gy) = grad(x, y);
                if !(gx.is_finite() && gy.is_finite()) {
                    return Err(Error::Data(format!("non-finite gradient at ({x}, {y})")));
                }
                avg.0 += w * gx;
                avg.1 += w * gy;
            }
            for k in 0..3 {
                if let Some(i) = idx[k] {
                    out[i] += self.diffusivity * area * (avg.0 * grads[k].0 + avg.1 * grads[k].1);
                }
            }
        }
        Ok(out)
    }

    fn mass_factor(&self) -> Result<&BandCholesky> {
        if let Some(f) = self.mass_factor.get() {
            return Ok(f);
        }
        let f = BandCholesky::factor(&self.mass)?;
        Ok(self.mass_factor.get_or_init(|| f))
    }

    fn stiffness_factor(&self) -> Result<&BandCholesky> {
        if let Some(f) = self.stiffness_factor.get() {
            return Ok(f);
        }
        let f = BandCholesky::factor(&self.stiffness)?;
        Ok(self.stiffness_factor.get_or_init(|| f))
    }

    /// Solves `M x = F` for a load vector `F`.
    pub fn solve_mass(&self, load: &[f64]) -> Result<Vec<f64>> {
        let x = self.mass_factor()?.solve(load)?;
        check_residual(&self.mass, &x, load)?;
        Ok(x)
    }

    /// `L²` projection `P_h g` onto the finite element space.
    pub fn l2_project(&self, g: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
        let load = self.load_vector(g)?;
        self.solve_mass(&load)
    }

    /// Ritz projection `R_h v`: `(∇ R_h v, ∇χ) = (∇v, ∇χ)` for all `χ`.
    pub fn ritz_project(&self, data: RitzData<'_>) -> Result<Vec<f64>> {
        let load = match data {
            RitzData::Gradient(grad) => self.gradient_load(grad)?,
            RitzData::Operator(av) => self.load_vector(av)?,
        };
        let x = self.stiffness_factor()?.solve(&load)?;
        check_residual(&self.stiffness, &x, &load)?;
        Ok(x)
    }

    /// `‖ψ‖ = (ψ^T M ψ)^{1/2}`.
    pub fn l2_norm(&self, x: &[f64]) -> f64 {
        linalg::quad_form(&self.mass, x).max(0.0).sqrt()
    }

    /// `|ψ| = (ψ^T (M + τ^α S) ψ)^{1/2}`, the norm in which inner solvers
    /// are required to contract.
    pub fn weighted_norm(&self, tau: f64, alpha: f64, x: &[f64]) -> f64 {
        let ta = tau.powf(alpha);
        (linalg::quad_form(&self.mass, x) + ta * linalg::quad_form(&self.stiffness, x))
            .max(0.0)
            .sqrt()
    }

    /// `‖u_h - u‖_{L²(Ω)}` for a nodal vector against a function, by the
    /// degree-4 rule on every triangle.
    pub fn l2_error(&self, x: &[f64], exact: impl Fn(f64, f64) -> f64) -> f64 {
        let mesh = &self.mesh;
        let area = mesh.triangle_area();
        let mut acc = 0.0;
        for t in mesh.triangles() {
            let pts = t.map(|v| mesh.point(v));
            let vals = t.map(|v| mesh.interior_index(v).map_or(0.0, |i| x[i]));
            for (l, w) in DEGREE4_RULE.iter() {
                let px = l[0] * pts[0].0 + l[1] * pts[1].0 + l[2] * pts[2].0;
                let py = l[0] * pts[0].1 + l[1] * pts[1].1 + l[2] * pts[2].1;
                let uh = l[0] * vals[0] + l[1] * vals[1] + l[2] * vals[2];
                let d = uh - exact(px, py);
                acc += area * w * d * d;
            }
        }
        acc.sqrt()
    }
}

fn check_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Result<()> {
    let r = linalg::relative_residual(a, x, b);
    if r <= 1e-12 {
        Ok(())
    } else {
        Err(Error::Numeric(format!("projection residual {r:e} above 1e-12")))
    }
}

/// `F_i = ∫ g φ_i` over the interior hat functions of `mesh`.
pub fn load_vector(mesh: &Mesh2D, g: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
    let area = mesh.triangle_area();
    let mut out = vec![0.0; mesh.num_interior()];
    for t in mesh.triangles() {
        let idx = t.map(|v| mesh.interior_index(v));
        if idx.iter().all(Option::is_none) {
            continue;
        }
        let pts = t.map(|v| mesh.point(v));
        let mut local = [0.0; 3];
        for (l, w) in DEGREE4_RULE.iter() {
            let x = l[0] * pts[0].0 + l[1] * pts[1].0 + l[2] * pts[2].0;
            let y = l[0] * pts[0].1 + l[1] * pts[1].1 + l[2] * pts[2].1;
            let gv = g(x, y);
            if !gv.is_finite() {
                return Err(Error::Data(format!("non-finite load value at ({x}, {y})")));
            }
            for k in 0..3 {
                local[k] += w * gv * l[k];
            }
        }
        for k in 0..3 {
            if let Some(i) = idx[k] {
                out[i] += area * local[k];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn system(k: usize, c: f64) -> FemSystem {
        FemSystem::assemble(Mesh2D::new(k).unwrap(), c).unwrap()
    }

    #[test]
    fn single_interior_node() {
        let s = system(2, 1.0);
        assert_eq!(s.stiffness().get(0, 0), Some(&4.0));
        assert!((s.mass().get(0, 0).unwrap() - 0.5).abs() < 1e-15);
        // ∫ φ_0 over six triangles of area 1/2, a third each
        let f = s.load_vector(|_, _| 1.0).unwrap();
        assert!((f[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matrices_are_bitwise_symmetric() {
        let s = system(8, 5.0);
        for m in [s.mass(), s.stiffness()] {
            for (i, row) in m.outer_iterator().enumerate() {
                for (j, v) in row.iter() {
                    assert_eq!(m.get(j, i).copied(), Some(*v));
                }
            }
        }
    }

    #[test]
    fn stiffness_rows_with_interior_stencil_sum_to_zero() {
        let s = system(8, 5.0);
        let mesh = s.mesh();
        for (i, row) in s.stiffness().outer_iterator().enumerate() {
            let (vi, vj) = mesh.interior_vertex(i);
            if vi >= 2 && vj >= 2 && vi <= 6 && vj <= 6 {
                let sum: f64 = row.iter().map(|(_, v)| v).sum();
                assert!(sum.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_load_and_projections() {
        let s = system(4, 1.0);
        assert!(s.load_vector(|_, _| 0.0).unwrap().iter().all(|&v| v == 0.0));
        assert!(s.l2_project(|_, _| 0.0).unwrap().iter().all(|&v| v == 0.0));
        let zero = |_: f64, _: f64| (0.0, 0.0);
        assert!(s.ritz_project(RitzData::Gradient(&zero)).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_load_is_a_data_error() {
        let s = system(4, 1.0);
        assert!(matches!(s.load_vector(|_, _| f64::NAN), Err(Error::Data(_))));
    }

    #[test]
    fn projections_reproduce_discrete_functions() {
        let s = system(8, 1.0);
        let mesh = s.mesh().clone();
        // hat function at interior vertex (3, 5)
        let target = mesh.interior_index((3, 5)).unwrap();
        let hat = |x: f64, y: f64| hat_value(&mesh, (3, 5), x, y);
        let p = s.l2_project(hat).unwrap();
        for (i, v) in p.iter().enumerate() {
            let want = if i == target { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-12);
        }
        let grad = |x: f64, y: f64| hat_gradient(&mesh, (3, 5), x, y);
        let r = s.ritz_project(RitzData::Gradient(&grad)).unwrap();
        for (i, v) in r.iter().enumerate() {
            let want = if i == target { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-12);
        }
    }

    /// Hat function of a grid vertex, evaluated through barycentric
    /// coordinates of the triangle containing the point.
    fn hat_value(mesh: &Mesh2D, v: Vertex, x: f64, y: f64) -> f64 {
        let h = mesh.h();
        let (vx, vy) = mesh.point(v);
        let (dx, dy) = ((x - vx) / h, (y - vy) / h);
        if dx.abs() >= 1.0 || dy.abs() >= 1.0 || (dx - dy).abs() >= 1.0 {
            return 0.0;
        }
        // six sectors of the bottom-left/top-right diagonal layout
        if dx >= 0.0 && dy <= 0.0 {
            1.0 - dx + dy
        } else if dx <= 0.0 && dy >= 0.0 {
            1.0 + dx - dy
        } else if dx >= 0.0 && dy >= 0.0 {
            1.0 - dx.max(dy)
        } else {
            1.0 + dx.min(dy)
        }
    }

    fn hat_gradient(mesh: &Mesh2D, v: Vertex, x: f64, y: f64) -> (f64, f64) {
        let h = mesh.h();
        let (vx, vy) = mesh.point(v);
        let (dx, dy) = ((x - vx) / h, (y - vy) / h);
        if dx.abs() >= 1.0 || dy.abs() >= 1.0 || (dx - dy).abs() >= 1.0 {
            return (0.0, 0.0);
        }
        let (gx, gy) = if dx >= 0.0 && dy <= 0.0 {
            (-1.0, 1.0)
        } else if dx <= 0.0 && dy >= 0.0 {
            (1.0, -1.0)
        } else if dx >= 0.0 && dy >= 0.0 {
            if dx > dy { (-1.0, 0.0) } else { (0.0, -1.0) }
        } else if dx < dy {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        (gx / h, gy / h)
    }

    #[test]
    fn weighted_norm_relations() {
        let s = system(8, 5.0);
        let x: Vec<f64> = (0..s.dim()).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        assert_eq!(s.weighted_norm(0.1, 0.5, &vec![0.0; s.dim()]), 0.0);
        let l2 = s.l2_norm(&x);
        let w = s.weighted_norm(1e-12, 0.9, &x);
        assert!((w - l2).abs() / l2 < 1e-5);
        let w = s.weighted_norm(0.01, 0.5, &x);
        let sx = linalg::quad_form(s.stiffness(), &x);
        assert!(((w * w - l2 * l2) - 0.1 * sx).abs() < 1e-10 * w * w);
    }
}
