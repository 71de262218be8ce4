//! Composite Simpson quadrature on a fixed grid.

/// Integrates `f` over `[lo, hi]` with composite Simpson's rule on `panels`
/// subintervals. An odd panel count is rounded up to the next even number.
pub fn simpson<F>(f: F, lo: f64, hi: f64, panels: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    assert!(hi > lo, "empty integration range");
    let n = (panels.max(2) + 1) & !1;
    let h = (hi - lo) / n as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for i in 1..n {
        let x = lo + i as f64 * h;
        if i % 2 == 1 {
            odd += f(x);
        } else {
            even += f(x);
        }
    }
    (f(lo) + f(hi) + 4.0 * odd + 2.0 * even) * h / 3.0
}

/// Numerically stable `ln(Σ exp(v))`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
