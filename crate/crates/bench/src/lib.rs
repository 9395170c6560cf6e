//! Benchmark fixtures shared by the criterion targets.

use std::sync::Arc;

use subdiff_core::fem::{FemSystem, Mesh2D};
use subdiff_core::mg::{MgConfig, MgHierarchy, SmootherKind};
use subdiff_core::problems::DIFFUSIVITY;
use subdiff_core::Result;

/// The benchmark system on a `K x K` mesh.
pub fn system(k: usize) -> Result<Arc<FemSystem>> {
    Ok(Arc::new(FemSystem::assemble(Mesh2D::new(k)?, DIFFUSIVITY)?))
}

/// Hierarchy for step size `tau` and order `alpha`.
pub fn hierarchy(sys: &Arc<FemSystem>, tau: f64, alpha: f64, smoother: SmootherKind) -> Result<MgHierarchy> {
    MgHierarchy::build(Arc::clone(sys), tau, alpha, MgConfig { smoother, ..MgConfig::default() })
}

/// Deterministic right-hand side with every mode present.
pub fn rhs(n: usize) -> Vec<f64> {
    (0..n).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect()
}
