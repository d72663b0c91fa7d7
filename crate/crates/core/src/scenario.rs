//! Closed DSL for terminal functions `g(x, mu)` and generators `f(t, x, y, z, nu)`
//! with symbolic Lipschitz and mean-dependence bookkeeping.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::clock::{GaussianDriverSpec, VarianceClock};
use crate::error::{Error, Result};
use crate::measures::{wasserstein_joint_bruteforce, LawFeatures};
use crate::rng;

/// 1-Lipschitz nonlinearities available to the DSL.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    #[default]
    None,
    Sin,
    Tanh,
    /// Clip to `[-1, 1]`.
    Clip,
}

impl Nonlinearity {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::None => 0.0,
            Self::Sin => x.sin(),
            Self::Tanh => x.tanh(),
            Self::Clip => x.clamp(-1.0, 1.0),
        }
    }

    /// Derivative, taken as zero at the kinks of `clip`.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Self::None => 0.0,
            Self::Sin => x.cos(),
            Self::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Self::Clip => {
                if x.abs() < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn lipschitz(self) -> f64 {
        match self {
            Self::None => 0.0,
            _ => 1.0,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "none" => Ok(Self::None),
            "sin" => Ok(Self::Sin),
            "tanh" => Ok(Self::Tanh),
            "clip" => Ok(Self::Clip),
            other => Err(Error::InvalidConfig(format!(
                "phi must be one of none, sin, tanh, clip; got {other:?}"
            ))),
        }
    }
}

/// `g(x, mu) = a + b x + c phi(x) + lambda_mean * mean_x(mu)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerminalSpec {
    pub a: f64,
    pub b: f64,
    pub phi: Nonlinearity,
    pub c: f64,
    pub lambda_mean: f64,
}

impl TerminalSpec {
    /// `g(x, mu) = x`.
    pub fn identity() -> Self {
        Self {
            b: 1.0,
            ..Self::default()
        }
    }

    pub fn affine(a: f64, b: f64) -> Self {
        Self {
            a,
            b,
            ..Self::default()
        }
    }

    pub fn lipschitz(&self) -> f64 {
        self.b.abs() + self.c.abs() * self.phi.lipschitz() + self.lambda_mean.abs()
    }

    pub fn depends_on_law(&self) -> bool {
        self.lambda_mean != 0.0
    }

    pub fn eval(&self, x: f64, features: &LawFeatures) -> f64 {
        self.a + self.b * x + self.c * self.phi.apply(x) + self.lambda_mean * features.mean_x
    }

    /// `d/dx g(x, mu)`.
    pub fn derivative_x(&self, x: f64) -> f64 {
        self.b + self.c * self.phi.derivative(x)
    }

    pub fn is_affine(&self) -> bool {
        self.phi == Nonlinearity::None || self.c == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in [("a", self.a), ("b", self.b), ("c", self.c), ("lambda_mean", self.lambda_mean)] {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!("terminal.{k} must be finite")));
            }
        }
        Ok(())
    }
}

/// `f = rho(t) * (c0 + c1 x + c2 y + c3 z + c4 phi(y) + kx mean_x + ky mean_y + kz mean_z)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub phi: Nonlinearity,
    pub c4: f64,
    pub kappa_x: f64,
    pub kappa_y: f64,
    pub kappa_z: f64,
    /// Piecewise-constant time factor as `[start, value]` rows; `None` means `rho = 1`.
    pub rho_table: Option<Vec<[f64; 2]>>,
}

impl GeneratorSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c0: f64) -> Self {
        Self {
            c0,
            ..Self::default()
        }
    }

    pub fn linear_y(c2: f64) -> Self {
        Self {
            c2,
            ..Self::default()
        }
    }

    pub fn mean_y(kappa_y: f64) -> Self {
        Self {
            kappa_y,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let coeffs = [
            ("c0", self.c0),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("c4", self.c4),
            ("kappa_x", self.kappa_x),
            ("kappa_y", self.kappa_y),
            ("kappa_z", self.kappa_z),
        ];
        for (k, v) in coeffs {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!("generator.{k} must be finite")));
            }
        }
        if let Some(table) = &self.rho_table {
            if table.is_empty() {
                return Err(Error::InvalidConfig("generator.rho_table is empty".into()));
            }
            if table[0][0] != 0.0 {
                return Err(Error::InvalidConfig(
                    "generator.rho_table must start at t = 0".into(),
                ));
            }
            for w in table.windows(2) {
                if !(w[1][0] > w[0][0]) {
                    return Err(Error::InvalidConfig(
                        "generator.rho_table breakpoints must increase".into(),
                    ));
                }
            }
            if table.iter().any(|r| !r[1].is_finite()) {
                return Err(Error::InvalidConfig("generator.rho_table values must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn rho(&self, t: f64) -> f64 {
        match &self.rho_table {
            None => 1.0,
            Some(table) => {
                let mut v = table[0][1];
                for row in table {
                    if row[0] <= t {
                        v = row[1];
                    } else {
                        break;
                    }
                }
                v
            }
        }
    }

    pub fn rho_sup(&self) -> f64 {
        match &self.rho_table {
            None => 1.0,
            Some(table) => table.iter().map(|r| r[1].abs()).fold(0.0, f64::max),
        }
    }

    fn phi_coeff(&self) -> f64 {
        self.c4 * self.phi.lipschitz()
    }

    /// Symbolic `L_f`.
    pub fn lipschitz(&self) -> f64 {
        self.rho_sup()
            * (self.c1.abs()
                + self.c2.abs()
                + self.c3.abs()
                + self.phi_coeff().abs()
                + self.kappa_x.abs()
                + self.kappa_y.abs()
                + self.kappa_z.abs())
    }

    /// Mean-dependence constant `K = sup |(D^L f)^(2)| = sup |rho| |kappa_y|`.
    pub fn mean_dependence(&self) -> f64 {
        self.rho_sup() * self.kappa_y.abs()
    }

    /// `(D^L f)^(2)` at time `t`; constant in the measure and the point for this family.
    pub fn lions_y(&self, t: f64) -> f64 {
        self.rho(t) * self.kappa_y
    }

    pub fn depends_on_law(&self) -> bool {
        self.kappa_x != 0.0 || self.kappa_y != 0.0 || self.kappa_z != 0.0
    }

    /// Law-free and affine with constant time factor.
    pub fn is_affine_law_free(&self) -> bool {
        !self.depends_on_law()
            && (self.phi == Nonlinearity::None || self.c4 == 0.0)
            && self.rho_table.is_none()
    }

    pub fn eval(&self, t: f64, x: f64, y: f64, z: f64, nu: &LawFeatures) -> f64 {
        let inner = self.c0
            + self.c1 * x
            + self.c2 * y
            + self.c3 * z
            + self.c4 * self.phi.apply(y)
            + self.kappa_x * nu.mean_x
            + self.kappa_y * nu.mean_y
            + self.kappa_z * nu.mean_z;
        self.rho(t) * inner
    }

    /// `f(t, 0, 0, 0, delta_0)`, bounded in `t` by construction.
    pub fn at_origin_sup(&self) -> f64 {
        self.rho_sup() * self.c0.abs()
    }

    /// The same generator read on the variance clock: breakpoints `b` of the
    /// time factor move to `V(b)`, so that `f'(s, ...) = f(U(s), ...)`.
    pub fn precompose_with_inverse_clock(&self, clock: &VarianceClock) -> Result<Self> {
        let mut out = self.clone();
        if let Some(table) = &self.rho_table {
            out.rho_table = Some(
                table
                    .iter()
                    .map(|r| Ok([clock.value(r[0])?, r[1]]))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(out)
    }
}

/// A complete scenario: terminal, generator and driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub terminal: TerminalSpec,
    pub generator: GeneratorSpec,
    pub driver: GaussianDriverSpec,
}

impl ScenarioSpec {
    pub fn new(terminal: TerminalSpec, generator: GeneratorSpec, driver: GaussianDriverSpec) -> Self {
        Self {
            terminal,
            generator,
            driver,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.terminal.validate()?;
        self.generator.validate()?;
        self.driver.validate()
    }

    pub fn depends_on_law(&self) -> bool {
        self.terminal.depends_on_law() || self.generator.depends_on_law()
    }

    /// Stable short digest of the scenario for reports.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("scenario serializes");
        let hash = Sha256::digest(json.as_bytes());
        hex::encode(&hash[..8])
    }
}

/// `g(x, mu)`.
pub fn eval_terminal(spec: &TerminalSpec, x: f64, features: &LawFeatures) -> f64 {
    spec.eval(x, features)
}

/// `f(t, x, y, z, nu)`.
pub fn eval_generator(
    spec: &GeneratorSpec,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    features: &LawFeatures,
) -> f64 {
    spec.eval(t, x, y, z, features)
}

/// Symbolic constants plus the largest empirical difference quotients seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzAudit {
    pub l_f: f64,
    pub l_g: f64,
    pub k: f64,
    pub f_at_origin: f64,
    pub g_at_origin: f64,
    pub probe_ratio_f: f64,
    pub probe_ratio_g: f64,
    pub n_probes: usize,
}

fn probe_verdict(which: &'static str, observed: f64, symbolic: f64) -> Result<()> {
    if observed > symbolic + 1e-9 {
        Err(Error::ProbeViolation {
            which,
            observed,
            symbolic,
        })
    } else {
        Ok(())
    }
}

fn features_of_cloud(cloud: &[Vec<f64>]) -> LawFeatures {
    let n = cloud.len() as f64;
    let col = |k: usize| cloud.iter().map(|p| p[k]).sum::<f64>() / n;
    let sec = |k: usize| cloud.iter().map(|p| p[k] * p[k]).sum::<f64>() / n;
    LawFeatures {
        mean_x: col(0),
        mean_y: col(1),
        mean_z: col(2),
        second_x: sec(0),
        second_y: sec(1),
        second_z: sec(2),
    }
}

fn random_cloud<R: Rng>(rng: &mut R, dist: &Normal<f64>, atoms: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..atoms)
        .map(|_| {
            let mut p = vec![0.0; 3];
            for v in p.iter_mut().take(dim) {
                *v = dist.sample(rng);
            }
            p
        })
        .collect()
}

/// Checks the (H1) bookkeeping: symbolic `L_f`, `L_g`, `K` and random probes of
/// the difference quotients on pairs of two-atom clouds.
pub fn lipschitz_audit(spec: &ScenarioSpec, n_probes: usize, seed: u64) -> Result<LipschitzAudit> {
    spec.validate()?;
    let gen = &spec.generator;
    let term = &spec.terminal;
    let l_f = gen.lipschitz();
    let l_g = term.lipschitz();
    let mut rng = rng::path_stream(seed, 0);
    let dist = Normal::new(0.0, 2.0).expect("valid normal");
    let horizon = spec.driver.horizon;
    let mut ratio_f: f64 = 0.0;
    let mut ratio_g: f64 = 0.0;
    for _ in 0..n_probes {
        let t = rng.random::<f64>() * horizon;
        let p1: [f64; 3] = [dist.sample(&mut rng), dist.sample(&mut rng), dist.sample(&mut rng)];
        let p2: [f64; 3] = [dist.sample(&mut rng), dist.sample(&mut rng), dist.sample(&mut rng)];
        let nu1 = random_cloud(&mut rng, &dist, 2, 3);
        let nu2 = random_cloud(&mut rng, &dist, 2, 3);
        let w2 = wasserstein_joint_bruteforce(&nu1, &nu2)?;
        let (f1, f2) = (features_of_cloud(&nu1), features_of_cloud(&nu2));
        let df = (gen.eval(t, p1[0], p1[1], p1[2], &f1) - gen.eval(t, p2[0], p2[1], p2[2], &f2)).abs();
        let denom = (p1[0] - p2[0]).abs() + (p1[1] - p2[1]).abs() + (p1[2] - p2[2]).abs() + w2;
        if denom > 1e-12 {
            ratio_f = ratio_f.max(df / denom);
        }
        let mu1 = random_cloud(&mut rng, &dist, 2, 1);
        let mu2 = random_cloud(&mut rng, &dist, 2, 1);
        let w2g = wasserstein_joint_bruteforce(&mu1, &mu2)?;
        let (g1, g2) = (features_of_cloud(&mu1), features_of_cloud(&mu2));
        let dg = (term.eval(p1[0], &g1) - term.eval(p2[0], &g2)).abs();
        let denom_g = (p1[0] - p2[0]).abs() + w2g;
        if denom_g > 1e-12 {
            ratio_g = ratio_g.max(dg / denom_g);
        }
    }
    probe_verdict("generator", ratio_f, l_f)?;
    probe_verdict("terminal", ratio_g, l_g)?;
    Ok(LipschitzAudit {
        l_f,
        l_g,
        k: gen.mean_dependence(),
        f_at_origin: gen.at_origin_sup(),
        g_at_origin: term.eval(0.0, &LawFeatures::default()).abs(),
        probe_ratio_f: ratio_f,
        probe_ratio_g: ratio_g,
        n_probes,
    })
}

/// A probe point where the claimed ordering fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub features: LawFeatures,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OrderProbe {
    Ordered,
    Counterexample(Counterexample),
}

impl OrderProbe {
    pub fn is_ordered(&self) -> bool {
        matches!(self, OrderProbe::Ordered)
    }
}

fn probe_times(f1: &GeneratorSpec, f2: &GeneratorSpec, horizon: f64, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut ts: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * horizon).collect();
    for g in [f1, f2] {
        if let Some(table) = &g.rho_table {
            ts.extend(table.iter().map(|r| r[0]).filter(|&b| b <= horizon));
        }
    }
    ts
}

/// Probes `f1 <= f2 + 1e-12` at random `(t, x, y, z, nu)`.
pub fn generator_order_probe(
    f1: &GeneratorSpec,
    f2: &GeneratorSpec,
    horizon: f64,
    n_probes: usize,
    seed: u64,
) -> OrderProbe {
    let mut rng = rng::path_stream(seed, 1);
    let dist = Normal::new(0.0, 3.0).expect("valid normal");
    for t in probe_times(f1, f2, horizon, n_probes, &mut rng) {
        let (x, y, z) = (dist.sample(&mut rng), dist.sample(&mut rng), dist.sample(&mut rng));
        let features = features_of_cloud(&random_cloud(&mut rng, &dist, 2, 3));
        let lhs = f1.eval(t, x, y, z, &features);
        let rhs = f2.eval(t, x, y, z, &features);
        if lhs > rhs + 1e-12 {
            return OrderProbe::Counterexample(Counterexample {
                t,
                x,
                y,
                z,
                features,
                lhs,
                rhs,
            });
        }
    }
    OrderProbe::Ordered
}

/// Probes `g1 <= g2 + 1e-12` at random `(x, mu)`.
pub fn terminal_order_probe(g1: &TerminalSpec, g2: &TerminalSpec, n_probes: usize, seed: u64) -> OrderProbe {
    let mut rng = rng::path_stream(seed, 2);
    let dist = Normal::new(0.0, 3.0).expect("valid normal");
    for _ in 0..n_probes {
        let x = dist.sample(&mut rng);
        let features = features_of_cloud(&random_cloud(&mut rng, &dist, 2, 1));
        let lhs = g1.eval(x, &features);
        let rhs = g2.eval(x, &features);
        if lhs > rhs + 1e-12 {
            return OrderProbe::Counterexample(Counterexample {
                t: f64::NAN,
                x,
                y: 0.0,
                z: 0.0,
                features,
                lhs,
                rhs,
            });
        }
    }
    OrderProbe::Ordered
}

/// Reduction of a particle cloud at one time to the statistics the DSL consumes.
pub fn law_features(x: &[f64], y: &[f64], z: &[f64]) -> Result<LawFeatures> {
    LawFeatures::from_samples(x, y, z)
}
