//! Empirical and Gaussian measure arithmetic: one-dimensional Wasserstein
//! distances, Gaussian relative entropy, the entropy functional and a
//! directional-derivative check for mean-type law functionals.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gaussian_expectation;
use crate::rng;
use crate::scenario::Nonlinearity;

/// Equally weighted atoms on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    atoms: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(atoms: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidConfig("measure atoms must be finite".into()));
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().sum::<f64>() / self.atoms.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.atoms.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / self.atoms.len() as f64
    }

    fn sorted(&self) -> Vec<f64> {
        let mut v = self.atoms.clone();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    /// Deterministic subsample of `k` atoms drawn without replacement.
    pub fn subsample(&self, k: usize, seed: u64) -> EmpiricalMeasure {
        if k >= self.atoms.len() {
            return self.clone();
        }
        let mut rng = rng::path_stream(seed, 0);
        let mut idx = sample(&mut rng, self.atoms.len(), k).into_vec();
        idx.sort_unstable();
        EmpiricalMeasure {
            atoms: idx.into_iter().map(|i| self.atoms[i]).collect(),
        }
    }
}

/// `N(mean, variance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianLaw1D {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianLaw1D {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance >= 0.0) || !mean.is_finite() || !variance.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "invalid Gaussian law N({mean}, {variance})"
            )));
        }
        Ok(Self { mean, variance })
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// `W_p` between two empirical measures via the sorted quantile coupling.
///
/// Clouds of different size are first subsampled to the smaller size with a
/// fixed seed.
pub fn wasserstein_1d(a: &EmpiricalMeasure, b: &EmpiricalMeasure, p: f64) -> Result<f64> {
    wasserstein_1d_seeded(a, b, p, 0)
}

pub fn wasserstein_1d_seeded(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    p: f64,
    seed: u64,
) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidConfig(format!("Wasserstein order p = {p} < 1")));
    }
    let n = a.len().min(b.len());
    let sa = a.subsample(n, seed).sorted();
    let sb = b.subsample(n, rng::derive_seed(seed, 1)).sorted();
    Ok(sorted_distance(&sa, &sb, p))
}

/// `W_p` between two already sorted atom lists of equal length.
pub fn sorted_distance(sa: &[f64], sb: &[f64], p: f64) -> f64 {
    let n = sa.len();
    let acc: f64 = sa
        .iter()
        .zip(sb)
        .map(|(x, y)| (x - y).abs().powf(p))
        .sum::<f64>()
        / n as f64;
    acc.powf(1.0 / p)
}

/// Closed-form `W_2` between one-dimensional Gaussians.
pub fn gaussian_w2(a: &GaussianLaw1D, b: &GaussianLaw1D) -> f64 {
    let dm = a.mean - b.mean;
    let ds = a.sd() - b.sd();
    (dm * dm + ds * ds).sqrt()
}

/// Relative entropy `H(nu | mu)` between Gaussians.
pub fn gaussian_kl(nu: &GaussianLaw1D, mu: &GaussianLaw1D) -> Result<f64> {
    if mu.variance == 0.0 {
        return if nu == mu {
            Ok(0.0)
        } else {
            Err(Error::DegenerateReference)
        };
    }
    if nu.variance == 0.0 {
        return Err(Error::DegenerateReference);
    }
    let dm = nu.mean - mu.mean;
    let kl = 0.5 * (mu.variance / nu.variance).ln() + (nu.variance + dm * dm) / (2.0 * mu.variance)
        - 0.5;
    Ok(kl.max(0.0))
}

/// Same as [`gaussian_kl`] but maps the degenerate case to `+inf`.
pub fn gaussian_kl_or_infinity(nu: &GaussianLaw1D, mu: &GaussianLaw1D) -> f64 {
    gaussian_kl(nu, mu).unwrap_or(f64::INFINITY)
}

/// Reference law for [`entropy_functional`].
#[derive(Debug, Clone, Copy)]
pub enum LawRef<'a> {
    Gaussian(GaussianLaw1D),
    Empirical(&'a EmpiricalMeasure),
}

/// `Ent_mu(F) = int F log F dmu - int F dmu * log int F dmu` for `F >= 0`.
pub fn entropy_functional<F: Fn(f64) -> f64>(mu: LawRef<'_>, f: F) -> Result<f64> {
    let flogf = |x: f64| {
        let v = f(x);
        if v <= 0.0 {
            0.0
        } else {
            v * v.ln()
        }
    };
    let (mass, a) = match mu {
        LawRef::Gaussian(g) => (
            gaussian_expectation(g.mean, g.variance, &f),
            gaussian_expectation(g.mean, g.variance, flogf),
        ),
        LawRef::Empirical(e) => {
            let n = e.len() as f64;
            (
                e.atoms().iter().map(|&x| f(x)).sum::<f64>() / n,
                e.atoms().iter().map(|&x| flogf(x)).sum::<f64>() / n,
            )
        }
    };
    if !(mass > 0.0) {
        return Err(Error::NonpositiveMass(mass));
    }
    Ok((a - mass * mass.ln()).max(0.0))
}

/// Law functionals whose Lions derivative is known in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LawFunctional {
    /// `mu -> int y dmu`
    Mean,
    /// `mu -> (int y dmu)^2`
    MeanSquared,
    /// `mu -> int phi dmu`
    MeanOf(Nonlinearity),
}

impl LawFunctional {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "mean" => Ok(Self::Mean),
            "mean_squared" => Ok(Self::MeanSquared),
            "mean_sin" => Ok(Self::MeanOf(Nonlinearity::Sin)),
            "mean_tanh" => Ok(Self::MeanOf(Nonlinearity::Tanh)),
            "mean_clip" => Ok(Self::MeanOf(Nonlinearity::Clip)),
            other => Err(Error::UnsupportedFunctional(other.to_string())),
        }
    }

    pub fn eval(&self, samples: &[f64]) -> f64 {
        let n = samples.len() as f64;
        match self {
            Self::Mean => samples.iter().sum::<f64>() / n,
            Self::MeanSquared => {
                let m = samples.iter().sum::<f64>() / n;
                m * m
            }
            Self::MeanOf(phi) => samples.iter().map(|&x| phi.apply(x)).sum::<f64>() / n,
        }
    }

    /// `E <D^L F(L_xi)(xi), eta>`.
    pub fn directional_derivative(&self, xi: &[f64], eta: &[f64]) -> f64 {
        let n = xi.len() as f64;
        match self {
            Self::Mean => eta.iter().sum::<f64>() / n,
            Self::MeanSquared => {
                let m = xi.iter().sum::<f64>() / n;
                2.0 * m * eta.iter().sum::<f64>() / n
            }
            Self::MeanOf(phi) => {
                xi.iter()
                    .zip(eta)
                    .map(|(&x, &e)| phi.derivative(x) * e)
                    .sum::<f64>()
                    / n
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalCheck {
    pub eps: Vec<f64>,
    pub quotients: Vec<f64>,
    pub analytic: f64,
    pub errors: Vec<f64>,
    pub converged: bool,
}

/// Finite-difference quotients `(F(L_{xi + eps eta}) - F(L_xi)) / eps` against
/// the Lions-derivative formula.
pub fn lions_directional_check(
    functional: LawFunctional,
    xi: &[f64],
    eta: &[f64],
    eps_list: &[f64],
) -> Result<DirectionalCheck> {
    if xi.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    if xi.len() != eta.len() {
        return Err(Error::GridMismatch(format!(
            "xi has {} samples, eta has {}",
            xi.len(),
            eta.len()
        )));
    }
    let base = functional.eval(xi);
    let analytic = functional.directional_derivative(xi, eta);
    let mut quotients = Vec::with_capacity(eps_list.len());
    let mut errors = Vec::with_capacity(eps_list.len());
    let mut shifted = vec![0.0; xi.len()];
    for &eps in eps_list {
        for ((s, &x), &e) in shifted.iter_mut().zip(xi).zip(eta) {
            *s = x + eps * e;
        }
        let q = (functional.eval(&shifted) - base) / eps;
        errors.push((q - analytic).abs());
        quotients.push(q);
    }
    let scale = 1.0 + analytic.abs();
    let converged = match (errors.first(), errors.last()) {
        (Some(&first), Some(&last)) => {
            last <= 1e-8 * scale || (last <= first && last <= 1e-2 * scale)
        }
        _ => false,
    };
    Ok(DirectionalCheck {
        eps: eps_list.to_vec(),
        quotients,
        analytic,
        errors,
        converged,
    })
}

/// Exact `W_2` between equal-size clouds of points in `R^d` by enumerating all
/// couplings; meant for a handful of atoms only.
pub fn wasserstein_joint_bruteforce(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    if a.len() != b.len() || a.len() > 8 {
        return Err(Error::InvalidConfig(
            "brute-force coupling needs equal sizes up to 8 atoms".into(),
        ));
    }
    let n = a.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let cost: f64 = p
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                a[i].iter()
                    .zip(&b[j])
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
            })
            .sum();
        best = best.min(cost);
    });
    Ok((best / n as f64).sqrt())
}

fn permute(perm: &mut [usize], k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == perm.len() {
        visit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, visit);
        perm.swap(k, i);
    }
}


/// First and second moments of a joint law of `(x, y, z)`; the only statistics
/// of the measure argument that the scenario DSL consumes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LawFeatures {
    pub mean_x: f64,
    pub mean_y: f64,
    pub mean_z: f64,
    pub second_x: f64,
    pub second_y: f64,
    pub second_z: f64,
}

impl LawFeatures {
    /// Features of a point mass at `(x, y, z)`.
    pub fn dirac(x: f64, y: f64, z: f64) -> Self {
        Self {
            mean_x: x,
            mean_y: y,
            mean_z: z,
            second_x: x * x,
            second_y: y * y,
            second_z: z * z,
        }
    }

    pub fn from_samples(x: &[f64], y: &[f64], z: &[f64]) -> Result<Self> {
        let n = x.len();
        if n == 0 {
            return Err(Error::EmptyCloud);
        }
        if y.len() != n || z.len() != n {
            return Err(Error::GridMismatch("feature components differ in length".into()));
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
        let second = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>() / n as f64;
        Ok(Self {
            mean_x: mean(x),
            mean_y: mean(y),
            mean_z: mean(z),
            second_x: second(x),
            second_y: second(y),
            second_z: second(z),
        })
    }
}
