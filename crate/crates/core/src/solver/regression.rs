//! Least-squares conditional expectations on a Hermite basis of the normalized state.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::poly::{hermite_to_monomial, hermite_values, Polynomial};

const CHUNK: usize = 4096;
const MAX_CONDITION: f64 = 1e12;

/// Ridge-regularized polynomial regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regressor {
    pub degree: usize,
    pub ridge: f64,
}

impl Regressor {
    pub fn new(degree: usize, ridge: f64) -> Self {
        Self { degree, ridge }
    }

    /// Fits `y ~ sum_k c_k He_k(x / scale)` and returns monomial coefficients in `x`.
    ///
    /// A zero `scale` (all states equal) degenerates to the sample mean.
    pub fn fit(&self, x: &[f64], y: &[f64], scale: f64) -> Result<Polynomial> {
        let n = x.len();
        if n == 0 || y.len() != n {
            return Err(Error::GridMismatch(format!(
                "regression inputs have lengths {} and {}",
                n,
                y.len()
            )));
        }
        if self.degree == 0 || !(scale > 0.0) {
            return Ok(Polynomial::constant(y.iter().sum::<f64>() / n as f64));
        }
        let m = self.degree + 1;
        // chunked partial sums, combined in a fixed order
        let partials: Vec<(Vec<f64>, Vec<f64>)> = x
            .par_chunks(CHUNK)
            .zip(y.par_chunks(CHUNK))
            .map(|(xs, ys)| {
                let mut gram = vec![0.0; m * m];
                let mut rhs = vec![0.0; m];
                let mut basis = vec![0.0; m];
                for (&xi, &yi) in xs.iter().zip(ys) {
                    hermite_values(xi / scale, self.degree, &mut basis);
                    for a in 0..m {
                        rhs[a] += basis[a] * yi;
                        for b in a..m {
                            gram[a * m + b] += basis[a] * basis[b];
                        }
                    }
                }
                (gram, rhs)
            })
            .collect();
        let mut gram = DMatrix::<f64>::zeros(m, m);
        let mut rhs = DVector::<f64>::zeros(m);
        for (g, r) in &partials {
            for a in 0..m {
                rhs[a] += r[a];
                for b in a..m {
                    gram[(a, b)] += g[a * m + b];
                }
            }
        }
        let inv_n = 1.0 / n as f64;
        for a in 0..m {
            rhs[a] *= inv_n;
            for b in a..m {
                let v = gram[(a, b)] * inv_n;
                gram[(a, b)] = v;
                gram[(b, a)] = v;
            }
        }
        // the intercept is not penalized
        for a in 1..m {
            gram[(a, a)] += self.ridge;
        }
        let eig = gram.clone().symmetric_eigenvalues();
        let (lo, hi) = eig
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if condition > MAX_CONDITION {
            return Err(Error::RegressionIllConditioned(condition));
        }
        let chol = gram
            .cholesky()
            .ok_or(Error::RegressionIllConditioned(condition))?;
        let coeffs = chol.solve(&rhs);
        Ok(hermite_to_monomial(coeffs.as_slice(), scale))
    }
}

/// Conditional expectation `E[target | x]` projected on polynomials of degree
/// `basis_degree`, normalized by the root mean square of `x`.
pub fn regress_conditional(
    basis_degree: usize,
    ridge: f64,
    x_samples: &[f64],
    targets: &[f64],
) -> Result<Polynomial> {
    if x_samples.len() < 10 * (basis_degree + 1) {
        return Err(Error::InvalidConfig(format!(
            "regression needs at least {} samples for degree {basis_degree}, got {}",
            10 * (basis_degree + 1),
            x_samples.len()
        )));
    }
    let rms = (x_samples.iter().map(|x| x * x).sum::<f64>() / x_samples.len() as f64).sqrt();
    Regressor::new(basis_degree, ridge).fit(x_samples, targets, rms)
}
