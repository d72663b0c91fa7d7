//! Dense univariate polynomials in the monomial basis.
//!
//! Regression happens in a probabilists' Hermite basis of the normalized state;
//! everything handed to callers is converted back to monomials in the raw state.

use serde::{Deserialize, Serialize};

/// `coeffs[k]` multiplies `x^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: vec![0.0] }
    }

    pub fn constant(c: f64) -> Self {
        Self { coeffs: vec![c] }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// Coefficient of `x^k`, zero beyond the stored degree.
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Polynomial::zero();
        }
        Polynomial {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        }
    }

    /// `x -> E[p(x + sigma * G)]` for standard normal `G`.
    pub fn gaussian_smooth(&self, sigma: f64) -> Polynomial {
        let n = self.coeffs.len();
        let mut out = vec![0.0; n.max(1)];
        for (k, &a) in self.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for j in 0..=k {
                let m = k - j;
                let moment = gaussian_moment(m, sigma);
                if moment != 0.0 {
                    out[j] += a * binomial(k, j) * moment;
                }
            }
        }
        Polynomial { coeffs: out }
    }

    pub fn scale(&self, factor: f64) -> Polynomial {
        Polynomial {
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(other.coeffs.len());
        Polynomial {
            coeffs: (0..n).map(|k| self.coeff(k) + other.coeff(k)).collect(),
        }
    }
}

/// `E[(sigma G)^m]`.
pub fn gaussian_moment(m: usize, sigma: f64) -> f64 {
    if m % 2 == 1 {
        return 0.0;
    }
    let mut dfact = 1.0;
    let mut j = m as i64 - 1;
    while j > 1 {
        dfact *= j as f64;
        j -= 2;
    }
    dfact * sigma.powi(m as i32)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// Values `He_0(x) ..= He_degree(x)` of the probabilists' Hermite polynomials.
pub fn hermite_values(x: f64, degree: usize, out: &mut [f64]) {
    out[0] = 1.0;
    if degree >= 1 {
        out[1] = x;
    }
    for k in 2..=degree {
        out[k] = x * out[k - 1] - (k - 1) as f64 * out[k - 2];
    }
}

/// Monomial coefficients of `He_k` for `k = 0..=degree`.
pub fn hermite_monomials(degree: usize) -> Vec<Vec<f64>> {
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(degree + 1);
    table.push(vec![1.0]);
    if degree >= 1 {
        table.push(vec![0.0, 1.0]);
    }
    for k in 2..=degree {
        let mut next = vec![0.0; k + 1];
        for (j, &c) in table[k - 1].iter().enumerate() {
            next[j + 1] += c;
        }
        for (j, &c) in table[k - 2].iter().enumerate() {
            next[j] -= (k - 1) as f64 * c;
        }
        table.push(next);
    }
    table
}

/// Converts `sum_k h[k] He_k(x / scale)` to monomials in `x`.
pub fn hermite_to_monomial(hermite: &[f64], scale: f64) -> Polynomial {
    let degree = hermite.len().saturating_sub(1);
    let table = hermite_monomials(degree);
    let mut out = vec![0.0; hermite.len().max(1)];
    for (k, &hk) in hermite.iter().enumerate() {
        for (j, &c) in table[k].iter().enumerate() {
            out[j] += hk * c / scale.powi(j as i32);
        }
    }
    Polynomial { coeffs: out }
}
