//! Deterministic quadrature against Gaussian laws.

/// Composite Simpson rule on `[a, b]` with `n` (rounded up to even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 1 { n + 1 } else { n.max(2) };
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        acc += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    acc * h / 3.0
}

/// `E[F(Y)]` for `Y ~ N(mean, variance)`; a point mass when `variance == 0`.
pub fn gaussian_expectation<F: Fn(f64) -> f64>(mean: f64, variance: f64, f: F) -> f64 {
    if variance <= 0.0 {
        return f(mean);
    }
    let sd = variance.sqrt();
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    simpson(
        |u| f(mean + sd * u) * norm * (-0.5 * u * u).exp(),
        -14.0,
        14.0,
        8000,
    )
}
