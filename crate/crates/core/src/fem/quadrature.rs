/// Symmetric six-point rule on a triangle, exact for polynomials of total
/// degree 4. Entries are barycentric coordinates and weights normalised to
/// sum to one.
pub const DEGREE4_RULE: [([f64; 3], f64); 6] = {
    const A: f64 = 0.445_948_490_915_965;
    const B: f64 = 0.108_103_018_168_070;
    const C: f64 = 0.091_576_213_509_771;
    const D: f64 = 0.816_847_572_980_459;
    const WA: f64 = 0.223_381_589_678_011;
    const WC: f64 = 0.109_951_743_655_322;
    [
        ([A, A, B], WA),
        ([A, B, A], WA),
        ([B, A, A], WA),
        ([C, C, D], WC),
        ([C, D, C], WC),
        ([D, C, C], WC),
    ]
};

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact integral over the unit reference triangle of `x^p y^q`
    /// is `p! q! / (p + q + 2)!`.
    fn monomial_exact(p: u32, q: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        fact(p) * fact(q) / fact(p + q + 2)
    }

    #[test]
    fn integrates_degree_four_exactly() {
        for p in 0..=4 {
            for q in 0..=(4 - p) {
                let approx: f64 = DEGREE4_RULE
                    .iter()
                    .map(|(l, w)| 0.5 * w * l[1].powi(p as i32) * l[2].powi(q as i32))
                    .sum();
                assert!((approx - monomial_exact(p, q)).abs() < 1e-14, "{p} {q}");
            }
        }
    }
}
