//! Backward Euler convolution quadrature.
//!
//! The discrete fractional derivative of order `γ` on a uniform grid is
//! `τ^{-γ} Σ_{j=0}^{n} b_j φ^{n-j}`, where `b_j` are the power series
//! coefficients of `(1 - ξ)^γ`.

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Order `γ` of the generating symbol `(1 - ξ)^γ`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FracOrder(f64);

impl FracOrder {
    /// Any order admissible for weight generation, `0 < γ < 2`.
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma.is_finite() && gamma > 0.0 && gamma < 2.0 {
            Ok(Self(gamma))
        } else {
            Err(Error::Domain(format!("order {gamma} outside (0, 2)")))
        }
    }

    /// A Caputo model order, `0 < α < 1`.
    pub fn caputo(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 0.0 && alpha < 1.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::Domain(format!("model order {alpha} outside (0, 1)")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `1 - γ`, the order of the kernel that turns a `γ`-derivative into a
    /// first derivative.
    pub fn complement(self) -> Result<Self> {
        Self::new(1.0 - self.0)
    }
}

/// Uniform partition of `[0, T]` into `N` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::Config(format!("final time {t_final} must be positive")));
        }
        if steps == 0 {
            return Err(Error::Config("time grid needs at least one step".into()));
        }
        Ok(Self { t_final, steps })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn tau(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    /// `t_n = n τ`, with `t_N` pinned to `T` exactly.
    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.t_final
        } else {
            n as f64 * self.tau()
        }
    }
}

/// Coefficients `b_0 ..= b_{n_max}` of `(1 - ξ)^γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    order: FracOrder,
    weights: Vec<f64>,
}

impl WeightTable {
    /// Builds the table with the recurrence `b_j = b_{j-1} (j - 1 - γ) / j`.
    pub fn generate(order: FracOrder, n_max: usize) -> Result<Self> {
        let len = n_max
            .checked_add(1)
            .filter(|&len| len <= isize::MAX as usize / std::mem::size_of::<f64>())
            .ok_or_else(|| Error::Size(format!("weight horizon {n_max} too large")))?;
        let gamma = order.value();
        let mut weights = Vec::with_capacity(len);
        weights.push(1.0);
        for j in 1..len {
            let prev = weights[j - 1];
            weights.push(prev * ((j - 1) as f64 - gamma) / j as f64);
        }
        Ok(Self { order, weights })
    }

    pub fn order(&self) -> FracOrder {
        self.order
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Highest index stored.
    pub fn horizon(&self) -> usize {
        self.weights.len() - 1
    }

    /// Partial sums `s_n = Σ_{j<=n} b_j`.
    pub fn partial_sums(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.weights
            .iter()
            .map(|b| {
                acc += b;
                acc
            })
            .collect()
    }

    /// Upper bound `e^{2γ} (j+1)^{-γ-1}` on `|b_j|` for `0 < γ < 1`.
    pub fn magnitude_bound(&self, j: usize) -> f64 {
        let gamma = self.order.value();
        (2.0 * gamma).exp() * ((j + 1) as f64).powf(-gamma - 1.0)
    }

    /// Cauchy product with another table, truncated to the shorter horizon.
    /// This is the weight sequence of the product symbol.
    pub fn convolve(&self, other: &WeightTable) -> Vec<f64> {
        let len = self.weights.len().min(other.weights.len());
        (0..len)
            .map(|n| {
                (0..=n)
                    .map(|j| self.weights[j] * other.weights[n - j])
                    .sum()
            })
            .collect()
    }

    /// Applies the discrete operator `τ^{-γ} Σ_{j=0}^{n} b_j φ^{n-j}` at every
    /// level `n` of a vector-valued sequence.
    pub fn apply(&self, tau: f64, seq: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let Some(first) = seq.first() else {
            return Ok(Vec::new());
        };
        if seq.len() > self.weights.len() {
            return Err(Error::Size(format!(
                "sequence of length {} exceeds weight horizon {}",
                seq.len(),
                self.horizon()
            )));
        }
        let dim = first.len();
        if let Some(bad) = seq.iter().find(|v| v.len() != dim) {
            return Err(Error::shape(dim, bad.len()));
        }
        let scale = tau.powf(-self.order.value());
        let out = (0..seq.len())
            .map(|n| {
                let mut acc = vec![0.0; dim];
                for (b, phi) in self.weights[..=n].iter().zip(seq[..=n].iter().rev()) {
                    for (a, p) in acc.iter_mut().zip(phi) {
                        *a += b * p;
                    }
                }
                acc.iter_mut().for_each(|a| *a *= scale);
                acc
            })
            .collect();
        Ok(out)
    }
}

/// Riemann–Liouville integral of order `α` of `t^β`:
/// `Γ(β+1) / Γ(β+1+α) · t^{β+α}`.
pub fn rl_integral_of_power(alpha: FracOrder, beta: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time {t} must be nonnegative")));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Domain(format!("exponent {beta} must be nonnegative")));
    }
    let a = alpha.value();
    Ok(gamma(beta + 1.0) / gamma(beta + 1.0 + a) * t.powf(beta + a))
}

/// Backward Euler CQ for the scalar relaxation problem
/// `∂̄^α (U^n - U^0) + λ U^n = f(t_n)`, `n = 1..=N`.
///
/// With `λ = 0` the exact solution is `U^0` plus the fractional integral of
/// `f`; with `λ > 0` the solution decays like a Mittag-Leffler function.
pub fn solve_scalar_relaxation(
    table: &WeightTable,
    grid: &TimeGrid,
    lambda: f64,
    u0: f64,
    f: impl Fn(f64) -> f64,
) -> Result<Vec<f64>> {
    let n_steps = grid.steps();
    if table.horizon() < n_steps {
        return Err(Error::Size(format!(
            "weight horizon {} shorter than {n_steps} steps",
            table.horizon()
        )));
    }
    let b = table.weights();
    let sums = table.partial_sums();
    let ta = grid.tau().powf(table.order().value());
    let mut u = Vec::with_capacity(n_steps + 1);
    u.push(u0);
    for n in 1..=n_steps {
        let history: f64 = (1..=n).map(|j| b[j] * u[n - j]).sum();
        let rhs = ta * f(grid.time(n)) + sums[n] * u0 - history;
        u.push(rhs / (1.0 + ta * lambda));
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(gamma: f64, n: usize) -> WeightTable {
        WeightTable::generate(FracOrder::new(gamma).unwrap(), n).unwrap()
    }

    /// Binomial coefficient `C(γ, j) (-1)^j` evaluated as a product of
    /// falling factorial terms, independent of the recurrence.
    fn binomial_oracle(gamma: f64, j: usize) -> f64 {
        let mut num = 1.0;
        let mut den = 1.0;
        for k in 0..j {
            num *= gamma - k as f64;
            den *= (k + 1) as f64;
        }
        if j.is_multiple_of(2) {
            num / den
        } else {
            -num / den
        }
    }

    #[test]
    fn leading_weights() {
        let t = table(0.5, 10);
        assert_eq!(t.weights()[0], 1.0);
        assert_eq!(t.weights()[1], -0.5);
        assert_eq!(t.weights()[2], -0.125);
        for j in 0..=10 {
            let want = binomial_oracle(0.5, j);
            assert!((t.weights()[j] - want).abs() <= 1e-15 * want.abs());
        }
    }

    #[test]
    fn first_order_symbol_is_backward_difference() {
        let t = table(1.0, 5);
        assert_eq!(t.weights(), &[1.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_orders() {
        for g in [0.0, -0.1, 2.0, 2.5, f64::NAN] {
            assert!(matches!(FracOrder::new(g), Err(Error::Domain(_))));
        }
        assert!(FracOrder::caputo(1.0).is_err());
        assert!(FracOrder::caputo(0.999).is_ok());
    }

    #[test]
    fn oversized_horizon_is_a_size_error() {
        let order = FracOrder::new(0.5).unwrap();
        assert!(matches!(WeightTable::generate(order, usize::MAX), Err(Error::Size(_))));
    }

    #[test]
    fn time_grid_endpoints() {
        let g = TimeGrid::new(1.0, 3).unwrap();
        assert_eq!(g.time(0), 0.0);
        assert_eq!(g.time(3), 1.0);
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(0.0, 4).is_err());
    }

    #[test]
    fn apply_rejects_ragged_sequences() {
        let t = table(0.5, 4);
        let seq = vec![vec![1.0, 2.0], vec![1.0]];
        assert!(matches!(t.apply(0.1, &seq), Err(Error::Shape { .. })));
        let long = vec![vec![0.0]; 6];
        assert!(matches!(t.apply(0.1, &long), Err(Error::Size(_))));
    }

    #[test]
    fn apply_on_zero_is_zero() {
        let t = table(0.3, 8);
        let out = t.apply(0.125, &vec![vec![0.0; 3]; 9]).unwrap();
        assert!(out.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn rl_integral_values() {
        let half = FracOrder::new(0.5).unwrap();
        assert_eq!(rl_integral_of_power(half, 0.0, 0.0).unwrap(), 0.0);
        let v = rl_integral_of_power(half, 0.0, 1.0).unwrap();
        assert!((v - 2.0 / std::f64::consts::PI.sqrt()).abs() < 1e-12);
        let one = FracOrder::new(1.0).unwrap();
        assert!((rl_integral_of_power(one, 1.0, 2.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(rl_integral_of_power(half, 0.0, -1.0).is_err());
    }

    #[test]
    fn scalar_relaxation_decays_monotonically() {
        let g = TimeGrid::new(1.0, 200).unwrap();
        let t = table(0.6, 200);
        let u = solve_scalar_relaxation(&t, &g, 3.0, 1.0, |_| 0.0).unwrap();
        assert!(u.iter().all(|&v| v > 0.0));
        assert!(u.windows(2).all(|w| w[1] < w[0]));
    }
}
