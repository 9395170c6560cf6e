//! The two benchmark problems: `A = -5Δ`, `T = 1` on `(-1, 1)^2`.
//!
//! Example 1 has zero initial data and the source
//! `f = t^2 (1 - x^2)(1 - y^2)`, which vanishes to second order at `t = 0`
//! and gives a smooth solution. Example 2 has no source and the
//! discontinuous initial value `v = χ(x < 0) + χ(y < 0)`, projected with
//! `P_h`; its solution is singular at `t = 0`. A third, smooth-data problem
//! exercises the Ritz-projected initial value.

use std::sync::Arc;

use crate::cq::{FracOrder, TimeGrid};
use crate::error::Result;
use crate::fem::FemSystem;
use crate::stepper::{InitialData, ProblemSpec, ScalarField, Source, SourceField};

pub const DIFFUSIVITY: f64 = 5.0;
pub const FINAL_TIME: f64 = 1.0;

pub fn example1_source() -> SourceField {
    Arc::new(|t, x, y| t * t * (1.0 - x * x) * (1.0 - y * y))
}

/// Indicator sum `χ_{(-1,0)}(x) + χ_{(-1,0)}(y)`.
pub fn example2_initial() -> ScalarField {
    Arc::new(|x, y| f64::from(u8::from(x < 0.0)) + f64::from(u8::from(y < 0.0)))
}

pub fn example1(alpha: f64, steps: usize, system: Arc<FemSystem>) -> Result<ProblemSpec> {
    Ok(ProblemSpec {
        alpha: FracOrder::caputo(alpha)?,
        grid: TimeGrid::new(FINAL_TIME, steps)?,
        system,
        initial: InitialData::Zero,
        source: Source::Field(example1_source()),
    })
}

pub fn example2(alpha: f64, steps: usize, system: Arc<FemSystem>) -> Result<ProblemSpec> {
    Ok(ProblemSpec {
        alpha: FracOrder::caputo(alpha)?,
        grid: TimeGrid::new(FINAL_TIME, steps)?,
        system,
        initial: InitialData::L2Projection(example2_initial()),
        source: Source::Zero,
    })
}

/// Smooth initial value `v = (1 - x^2)(1 - y^2)`, which lies in the domain
/// of `A`; `v_h = R_h v` and no source.
pub fn smooth_initial(alpha: f64, steps: usize, system: Arc<FemSystem>) -> Result<ProblemSpec> {
    Ok(ProblemSpec {
        alpha: FracOrder::caputo(alpha)?,
        grid: TimeGrid::new(FINAL_TIME, steps)?,
        system,
        initial: InitialData::RitzProjection(Arc::new(|x, y| {
            (-2.0 * x * (1.0 - y * y), -2.0 * y * (1.0 - x * x))
        })),
        source: Source::Zero,
    })
}
