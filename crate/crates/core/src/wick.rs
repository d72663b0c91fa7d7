//! First-chaos Wick products, Riemann–Wick sums and Monte Carlo S-transforms.
//!
//! For a polynomial `p` and a first-chaos increment `dX = X_{t_{i+1}} - X_{t_i}`,
//!
//! ```text
//! p(X_{t_i}) ⋄ dX = p(X_{t_i}) dX - p'(X_{t_i}) E[X_{t_i} dX].
//! ```
//!
//! The rule is not taken on faith: [`s_transform_factorization`] checks
//! `S(p(X) ⋄ dX)(h) = S(p(X))(h) S(dX)(h)` by simulation. That is evidence over
//! finitely many step functions `h`, not a proof for all of them.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clock::{covariance, covariance_matrix, GaussianDriverSpec, PathBatch, VarianceClock};
use crate::error::{Error, Result};
use crate::measures::LawFeatures;
use crate::poly::Polynomial;
use crate::scenario::ScenarioSpec;
use crate::solver::SolutionField;

/// `h(t) = ∫_0^t h'(s) dV_s` with `h'` constant on each `[b_k, b_{k+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunctionH {
    pub breakpoints: Vec<f64>,
    pub density: Vec<f64>,
}

impl StepFunctionH {
    pub fn new(breakpoints: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != density.len() + 1 || density.is_empty() {
            return Err(Error::InvalidGrid(
                "step function needs one more breakpoint than density values".into(),
            ));
        }
        if breakpoints[0] != 0.0 || breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid(
                "breakpoints must start at 0 and increase strictly".into(),
            ));
        }
        if density.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidGrid("density values must be finite".into()));
        }
        Ok(Self { breakpoints, density })
    }

    /// Constant density on `[0, horizon]`.
    pub fn constant(value: f64, horizon: f64) -> Self {
        Self {
            breakpoints: vec![0.0, horizon],
            density: vec![value],
        }
    }

    /// `h(t)`; the density is extended by zero beyond the last breakpoint.
    pub fn eval(&self, driver: &GaussianDriverSpec, t: f64) -> Result<f64> {
        let var = |s: f64| covariance(driver, s, s);
        let mut acc = 0.0;
        for (k, d) in self.density.iter().enumerate() {
            let (a, b) = (self.breakpoints[k], self.breakpoints[k + 1]);
            if t <= a {
                break;
            }
            acc += d * (var(t.min(b))? - var(a)?);
        }
        Ok(acc)
    }

    /// `∫ h'^2 dV`.
    pub fn energy(&self, driver: &GaussianDriverSpec) -> Result<f64> {
        let mut acc = 0.0;
        for (k, d) in self.density.iter().enumerate() {
            let (a, b) = (self.breakpoints[k], self.breakpoints[k + 1]);
            acc += d * d * (covariance(driver, b, b)? - covariance(driver, a, a)?);
        }
        Ok(acc)
    }
}

/// Grid realization of the first-chaos element `I` with `E[I X_t] = h(t)` at
/// every sampling time: `I = sum_j a_j X_{t_j}` where `C a = h(grid)`.
///
/// On a Brownian driver this is `sum_i h'_i dX_i`; for correlated drivers the
/// increment sum has the wrong covariance with `X`, so the system is solved instead.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub weights: Vec<f64>,
    /// `h` at the sampling times.
    pub h_values: Vec<f64>,
    /// `Var I = a^T h`, from the exact covariance.
    pub variance: f64,
}

impl Realization {
    pub fn new(h: &StepFunctionH, driver: &GaussianDriverSpec, grid_t: &[f64]) -> Result<Self> {
        let h_values: Vec<f64> = grid_t
            .iter()
            .map(|&t| h.eval(driver, t))
            .collect::<Result<_>>()?;
        let c = covariance_matrix(driver, grid_t);
        let rhs = DVector::from_column_slice(&h_values);
        let a = match c.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => c
                .lu()
                .solve(&rhs)
                .ok_or(Error::CholeskyFailure { pivot: 0 })?,
        };
        let variance = a.dot(&rhs);
        Ok(Self {
            weights: a.as_slice().to_vec(),
            h_values,
            variance,
        })
    }

    /// Per-path samples of the Wick exponential `exp(I - Var I / 2)`.
    pub fn wick_exponential(&self, paths: &PathBatch) -> Vec<f64> {
        (0..paths.n_paths)
            .into_par_iter()
            .map(|p| {
                let i: f64 = paths.path(p).iter().zip(&self.weights).map(|(x, a)| x * a).sum();
                (i - 0.5 * self.variance).exp()
            })
            .collect()
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

impl McEstimate {
    pub fn from_samples(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            estimate: m,
            std_error: (var / n).sqrt(),
        }
    }

    /// Whether `target` lies within `k` standard errors (with a rounding floor).
    pub fn agrees_with(&self, target: f64, k: f64) -> bool {
        (self.estimate - target).abs() <= k * self.std_error + 1e-12 * (1.0 + target.abs())
    }
}

/// `(S eta)(h) = E[eta exp(I_h - Var I_h / 2)]`, with `eta` sampled jointly with `paths`.
pub fn s_transform_mc(
    eta: &[f64],
    h: &StepFunctionH,
    driver: &GaussianDriverSpec,
    paths: &PathBatch,
) -> Result<McEstimate> {
    if eta.len() != paths.n_paths {
        return Err(Error::GridMismatch(format!(
            "{} samples for {} paths",
            eta.len(),
            paths.n_paths
        )));
    }
    let r = Realization::new(h, driver, &paths.grid_t)?;
    let e = r.wick_exponential(paths);
    let prod: Vec<f64> = eta.iter().zip(&e).map(|(a, b)| a * b).collect();
    Ok(McEstimate::from_samples(&prod))
}

/// Per-path `p(x) dx - p'(x) (cov_cross - var_ti)`, where `cov_cross = E[X_{t_i} X_{t_{i+1}}]`
/// and `var_ti = Var X_{t_i}`.
pub fn wick_product_first_chaos(
    poly: &Polynomial,
    x: &[f64],
    dx: &[f64],
    cov_cross: f64,
    var_ti: f64,
) -> Result<Vec<f64>> {
    if x.len() != dx.len() {
        return Err(Error::GridMismatch("state and increment samples differ in length".into()));
    }
    if dx.iter().all(|&d| d == dx[0]) {
        return Err(Error::DegenerateIncrement(dx.first().copied().unwrap_or(0.0)));
    }
    let dp = poly.derivative();
    let corr = cov_cross - var_ti;
    Ok(x.iter()
        .zip(dx)
        .map(|(&xi, &di)| poly.eval(xi) * di - dp.eval(xi) * corr)
        .collect())
}

/// Outcome of one S-transform factorization test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorizationCheck {
    /// `S(p(X) ⋄ dX)(h)`
    pub lhs: f64,
    /// `S(p(X))(h) * S(dX)(h)`
    pub rhs: f64,
    /// Standard error of `lhs - rhs` (delta method on paired samples).
    pub std_error: f64,
    /// Exact `S(dX)(h) = h(t_{i+1}) - h(t_i)`.
    pub s_increment_exact: f64,
    pub pass: bool,
}

/// Monte Carlo factorization test of the first-chaos Wick product between
/// sampling columns `i` and `i + 1` of `paths`, passed at `k_sigma` standard errors.
///
/// All three S-transforms use self-normalized weights `e / mean(e)`: the
/// heavy-tailed fluctuation of `mean(e)` around 1 is common to every term and
/// says nothing about the product rule, so it is divided out. The standard error
/// is the delta-method error of the resulting ratio of means.
pub fn s_transform_factorization(
    poly: &Polynomial,
    h: &StepFunctionH,
    driver: &GaussianDriverSpec,
    paths: &PathBatch,
    i: usize,
    k_sigma: f64,
) -> Result<FactorizationCheck> {
    if i + 1 >= paths.n_times() {
        return Err(Error::GridMismatch(format!("no sampling column after index {i}")));
    }
    let (ti, tn) = (paths.grid_t[i], paths.grid_t[i + 1]);
    let x = paths.column(i);
    let xn = paths.column(i + 1);
    let dx: Vec<f64> = xn.iter().zip(&x).map(|(b, a)| b - a).collect();
    let wp = wick_product_first_chaos(
        poly,
        &x,
        &dx,
        covariance(driver, ti, tn)?,
        covariance(driver, ti, ti)?,
    )?;
    let r = Realization::new(h, driver, &paths.grid_t)?;
    let e = r.wick_exponential(paths);
    let n = paths.n_paths;
    let a: Vec<f64> = (0..n).map(|p| wp[p] * e[p]).collect();
    let b: Vec<f64> = (0..n).map(|p| poly.eval(x[p]) * e[p]).collect();
    let c: Vec<f64> = (0..n).map(|p| dx[p] * e[p]).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (ma, mb, mc, me) = (mean(&a), mean(&b), mean(&c), mean(&e));
    let lhs = ma / me;
    let rhs = (mb / me) * (mc / me);
    // gradient of ma/me - mb mc/me^2 with respect to (ma, mb, mc, me)
    let (ga, gb, gc) = (1.0 / me, -mc / (me * me), -mb / (me * me));
    let ge = -ma / (me * me) + 2.0 * mb * mc / (me * me * me);
    let psi: Vec<f64> = (0..n).map(|p| ga * a[p] + gb * b[p] + gc * c[p] + ge * e[p]).collect();
    let se = McEstimate::from_samples(&psi).std_error;
    Ok(FactorizationCheck {
        lhs,
        rhs,
        std_error: se,
        s_increment_exact: r.h_values[i + 1] - r.h_values[i],
        pass: (lhs - rhs).abs() <= k_sigma * se + 1e-12 * (1.0 + lhs.abs()),
    })
}

/// `v(t_i, .)` and its derivative on each cell of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstChaosIntegrand {
    pub polys: Vec<Polynomial>,
    pub derivatives: Vec<Polynomial>,
}

impl FirstChaosIntegrand {
    pub fn from_polys(polys: Vec<Polynomial>) -> Self {
        let derivatives = polys.iter().map(Polynomial::derivative).collect();
        Self { polys, derivatives }
    }

    /// `v ≡ value` on `n_cells` cells.
    pub fn constant(value: f64, n_cells: usize) -> Self {
        Self::from_polys(vec![Polynomial::constant(value); n_cells])
    }

    /// `Z`-representation of a solved field at every node except the last.
    pub fn from_field(field: &SolutionField) -> Self {
        let n = field.n_nodes();
        Self::from_polys(field.v[..n - 1].to_vec())
    }

    pub fn n_cells(&self) -> usize {
        self.polys.len()
    }
}

/// Sampling layout shared by the Riemann–Wick routines: `X_0 = 0` followed by
/// the batch columns on `clock.times()[1..]`.
struct WickGrid {
    var: Vec<f64>,
    correction: Vec<f64>,
}

impl WickGrid {
    fn new(paths: &PathBatch, driver: &GaussianDriverSpec, clock: &VarianceClock) -> Result<Self> {
        let times = clock.times();
        if clock.start() != 0.0 {
            return Err(Error::GridMismatch("Wick sums need a clock starting at 0".into()));
        }
        if paths.grid_t.len() + 1 != times.len()
            || paths
                .grid_t
                .iter()
                .zip(&times[1..])
                .any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + b.abs()))
        {
            return Err(Error::GridMismatch(format!(
                "paths sampled on {} times, clock has {} nodes after 0",
                paths.grid_t.len(),
                times.len() - 1
            )));
        }
        let var: Vec<f64> = times
            .iter()
            .map(|&t| covariance(driver, t, t))
            .collect::<Result<_>>()?;
        let correction: Vec<f64> = (0..times.len() - 1)
            .map(|i| Ok(covariance(driver, times[i], times[i + 1])? - var[i]))
            .collect::<Result<_>>()?;
        Ok(Self { var, correction })
    }

    fn x(paths: &PathBatch, p: usize, node: usize) -> f64 {
        if node == 0 {
            0.0
        } else {
            paths.value(p, node - 1)
        }
    }
}

/// Per-path tail sums `sum_{i >= j} v(t_i, X_{t_i}) ⋄ dX_i`, for `j = 0..=N`
/// (the last entry is zero).
pub fn riemann_wick_tails(
    integrand: &FirstChaosIntegrand,
    paths: &PathBatch,
    driver: &GaussianDriverSpec,
    clock: &VarianceClock,
) -> Result<Vec<Vec<f64>>> {
    let grid = WickGrid::new(paths, driver, clock)?;
    let cells = clock.len() - 1;
    if integrand.n_cells() != cells {
        return Err(Error::GridMismatch(format!(
            "integrand has {} cells, grid has {cells}",
            integrand.n_cells()
        )));
    }
    if let Some(i) = (0..cells).find(|&i| grid.var[i + 1] - 2.0 * (grid.correction[i] + grid.var[i]) + grid.var[i] <= 0.0) {
        return Err(Error::DegenerateIncrement(clock.times()[i]));
    }
    let per_path: Vec<Vec<f64>> = (0..paths.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut tails = vec![0.0; cells + 1];
            for i in (0..cells).rev() {
                let x = WickGrid::x(paths, p, i);
                let dx = WickGrid::x(paths, p, i + 1) - x;
                let term = integrand.polys[i].eval(x) * dx
                    - integrand.derivatives[i].eval(x) * grid.correction[i];
                tails[i] = tails[i + 1] + term;
            }
            tails
        })
        .collect();
    Ok((0..=cells)
        .map(|j| per_path.iter().map(|t| t[j]).collect())
        .collect())
}

/// Per-path Riemann–Wick sums over the whole grid.
pub fn riemann_wick_integral(
    integrand: &FirstChaosIntegrand,
    paths: &PathBatch,
    driver: &GaussianDriverSpec,
    clock: &VarianceClock,
) -> Result<Vec<f64>> {
    Ok(riemann_wick_tails(integrand, paths, driver, clock)?.swap_remove(0))
}

/// Residual statistics of the backward identity at one grid time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub t: f64,
    pub mean: f64,
    pub mean_se: f64,
    pub rms: f64,
    pub rms_se: f64,
}

/// Per grid time `t_j`, statistics over paths of
/// `R = u(t_j, X) - g(X_T) - sum_{i>=j} f(t_i, X, u, v, L_i) dV_i + sum_{i>=j} v ⋄ dX_i`.
pub fn bsde_residual(
    field: &SolutionField,
    scn: &ScenarioSpec,
    paths: &PathBatch,
    clock: &VarianceClock,
) -> Result<Vec<ResidualStats>> {
    if field.clock != *clock {
        return Err(Error::GridMismatch("field was solved on a different clock".into()));
    }
    let wick = riemann_wick_tails(&FirstChaosIntegrand::from_field(field), paths, &scn.driver, clock)?;
    let times = clock.times();
    let sv = clock.variances();
    let cells = times.len() - 1;
    let terminal_features: LawFeatures = field.features[cells];
    let residuals: Vec<Vec<f64>> = (0..paths.n_paths)
        .into_par_iter()
        .map(|p| {
            let x = |node: usize| WickGrid::x(paths, p, node);
            let g = scn.terminal.eval(x(cells), &terminal_features);
            let mut r = vec![0.0; cells + 1];
            let mut drift = 0.0;
            r[cells] = field.u[cells].eval(x(cells)) - g;
            for i in (0..cells).rev() {
                let xi = x(i);
                let (u, v) = (field.u[i].eval(xi), field.v[i].eval(xi));
                drift += scn.generator.eval(times[i], xi, u, v, &field.features[i]) * (sv[i + 1] - sv[i]);
                r[i] = u - g - drift + wick[i][p];
            }
            r
        })
        .collect();
    let n = paths.n_paths as f64;
    Ok((0..=cells)
        .map(|j| {
            let col: Vec<f64> = residuals.iter().map(|r| r[j]).collect();
            let m = McEstimate::from_samples(&col);
            let sq: Vec<f64> = col.iter().map(|a| a * a).collect();
            let msq = McEstimate::from_samples(&sq);
            let rms = msq.estimate.sqrt();
            let rms_se = if rms > 0.0 { msq.std_error / (2.0 * rms) } else { 0.0 };
            debug_assert!(n > 0.0);
            ResidualStats {
                t: times[j],
                mean: m.estimate,
                mean_se: m.std_error,
                rms,
                rms_se,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{build_clock, sample_paths};

    fn uniform(n: usize, t: f64) -> Vec<f64> {
        (1..=n).map(|k| t * k as f64 / n as f64).collect()
    }

    #[test]
    fn constant_polynomial_gives_plain_product() {
        let x = [0.3, -1.0, 2.0];
        let dx = [0.1, 0.2, -0.4];
        let out = wick_product_first_chaos(&Polynomial::constant(1.0), &x, &dx, 0.7, 0.5).unwrap();
        assert_eq!(out, dx.to_vec());
    }

    #[test]
    fn brownian_identity_has_no_correction() {
        let x = [0.3, -1.0];
        let dx = [0.1, 0.2];
        let out = wick_product_first_chaos(&Polynomial::new(vec![0.0, 1.0]), &x, &dx, 0.5, 0.5).unwrap();
        assert_eq!(out, vec![0.03, -0.2]);
    }

    #[test]
    fn degenerate_increments_are_rejected() {
        let r = wick_product_first_chaos(&Polynomial::constant(1.0), &[1.0, 2.0], &[0.0, 0.0], 0.0, 0.0);
        assert!(matches!(r, Err(Error::DegenerateIncrement(_))));
    }

    #[test]
    fn wick_product_against_fbm_increment_is_centered() {
        let d = GaussianDriverSpec::fbm(0.7, 1.0);
        let grid = [0.4, 0.6];
        let paths = sample_paths(&d, &grid, 100_000, 11).unwrap();
        let (x, xn) = (paths.column(0), paths.column(1));
        let dx: Vec<f64> = xn.iter().zip(&x).map(|(b, a)| b - a).collect();
        let wp = wick_product_first_chaos(
            &Polynomial::new(vec![0.0, 1.0]),
            &x,
            &dx,
            covariance(&d, 0.4, 0.6).unwrap(),
            covariance(&d, 0.4, 0.4).unwrap(),
        )
        .unwrap();
        assert!(McEstimate::from_samples(&wp).agrees_with(0.0, 3.0));
    }

    #[test]
    fn realization_is_increment_sum_on_brownian_driver() {
        let d = GaussianDriverSpec::brownian(1.0);
        let grid = uniform(4, 1.0);
        let h = StepFunctionH::new(vec![0.0, 0.5, 1.0], vec![2.0, -1.0]).unwrap();
        let r = Realization::new(&h, &d, &grid).unwrap();
        // sum h'_i dX_i = 2 X_.25 + 0 X_.5 ... in node weights: a_j = h'_j - h'_{j+1}
        let expected = [0.0, 3.0, 0.0, -1.0];
        for (a, e) in r.weights.iter().zip(expected) {
            assert!((a - e).abs() < 1e-10, "{:?}", r.weights);
        }
        assert!((r.variance - h.energy(&d).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn s_transform_examples() {
        for d in [GaussianDriverSpec::brownian(1.0), GaussianDriverSpec::fbm(0.7, 1.0)] {
            let grid = uniform(8, 1.0);
            let paths = sample_paths(&d, &grid, 100_000, 3).unwrap();
            let h = StepFunctionH::constant(1.0, 1.0);
            let one = s_transform_mc(&vec![1.0; paths.n_paths], &h, &d, &paths).unwrap();
            assert!(one.agrees_with(1.0, 3.0), "{one:?}");
            let x = paths.column(3);
            let sx = s_transform_mc(&x, &h, &d, &paths).unwrap();
            let v = covariance(&d, grid[3], grid[3]).unwrap();
            assert!(sx.agrees_with(v, 3.0), "{sx:?} vs {v}");
        }
    }

    #[test]
    fn factorization_holds_for_square() {
        let d = GaussianDriverSpec::fbm(0.7, 1.0);
        let grid = uniform(8, 1.0);
        let paths = sample_paths(&d, &grid, 100_000, 5).unwrap();
        let p = Polynomial::new(vec![0.0, 0.0, 1.0]);
        for h in [
            StepFunctionH::constant(0.5, 1.0),
            StepFunctionH::new(vec![0.0, 0.5, 1.0], vec![1.0, -0.5]).unwrap(),
        ] {
            let c = s_transform_factorization(&p, &h, &d, &paths, 3, 3.0).unwrap();
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn constant_integrand_telescopes() {
        let d = GaussianDriverSpec::fbm(0.3, 1.0);
        let clock = build_clock(&d, 9).unwrap();
        let paths = sample_paths(&d, &clock.times()[1..], 50, 1).unwrap();
        let ints = riemann_wick_integral(&FirstChaosIntegrand::constant(1.0, 8), &paths, &d, &clock).unwrap();
        for (p, v) in ints.iter().enumerate() {
            assert!((v - paths.value(p, 7)).abs() < 1e-12);
        }
        let bad = FirstChaosIntegrand::constant(1.0, 7);
        assert!(matches!(
            riemann_wick_integral(&bad, &paths, &d, &clock),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn brownian_wick_sum_is_forward_ito_sum() {
        let d = GaussianDriverSpec::brownian(1.0);
        let clock = build_clock(&d, 17).unwrap();
        let paths = sample_paths(&d, &clock.times()[1..], 20, 2).unwrap();
        let v = FirstChaosIntegrand::from_polys(vec![Polynomial::new(vec![0.5, -1.0, 0.3]); 16]);
        let ints = riemann_wick_integral(&v, &paths, &d, &clock).unwrap();
        for (p, got) in ints.iter().enumerate() {
            let x = |k: usize| if k == 0 { 0.0 } else { paths.value(p, k - 1) };
            // same summation order as the tail sums
            let ito = (0..16)
                .rev()
                .fold(0.0, |acc, k| acc + v.polys[k].eval(x(k)) * (x(k + 1) - x(k)));
            assert_eq!(*got, ito);
        }
    }

    #[test]
    fn step_function_values() {
        let d = GaussianDriverSpec::fbm(0.7, 1.0);
        let h = StepFunctionH::new(vec![0.0, 0.5, 1.0], vec![2.0, -1.0]).unwrap();
        let v = |t: f64| t.powf(1.4);
        assert!((h.eval(&d, 0.25).unwrap() - 2.0 * v(0.25)).abs() < 1e-14);
        assert!((h.eval(&d, 0.75).unwrap() - (2.0 * v(0.5) - (v(0.75) - v(0.5)))).abs() < 1e-14);
        assert!(StepFunctionH::new(vec![0.0, 0.5], vec![1.0, 2.0]).is_err());
    }
}
