//! Solvers for the subdiffusion equation `∂_t^α u - c_A Δu = f` on the
//! square `(-1, 1)^2` with homogeneous Dirichlet data.
//!
//! Space is discretized by piecewise-linear finite elements on a uniform
//! triangulation ([`fem`]), time by backward Euler convolution quadrature
//! ([`cq`]). Each time step needs one solve with `M + τ^α S`; [`stepper`]
//! performs it either exactly or incompletely with a scheduled number of
//! multigrid V-cycles ([`mg`]).

pub mod cq;
pub mod error;
pub mod fem;
pub mod linalg;
pub mod mg;
pub mod problems;
pub mod stepper;

pub use error::{Error, Result};
