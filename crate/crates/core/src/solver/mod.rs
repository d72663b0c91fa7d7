//! Backward least-squares Monte Carlo for the auxiliary Brownian equation on
//! `[0, V_T]`, with Picard iteration on the flow of laws, and evaluation of the
//! solution on the original clock.
//!
//! One backward pass, with law features frozen at the previous Picard iterate:
//!
//! ```text
//! Y_N = g(W_N, L_{W_N}),  Z_N = g'(W_N)
//! Z_i = E_i[ dY_{i+1}/dw ]                       (or E_i[Y_{i+1} dW_i] / ds)
//! P_i = E_i[ Y_{i+1} - Z_i dW_i ]
//! Y_i = proj( P_i + f(t_i, W_i, P_i, Z_i, L_i) ds )
//! ```
//!
//! The node at `s = 0` carries no spread in the state, so its conditional
//! expectations are obtained by exact Gaussian smoothing of the polynomial
//! representation at the next node.

mod regression;

pub use regression::{regress_conditional, Regressor};

use serde::{Deserialize, Serialize};

use crate::clock::{DriverKind, GaussianDriverSpec, PathBatch, VarianceClock};
use crate::error::{Error, Result};
use crate::measures::{sorted_distance, LawFeatures};
use crate::poly::Polynomial;
use crate::scenario::{GeneratorSpec, ScenarioSpec, TerminalSpec};

/// How `Z` is estimated at each step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZEstimator {
    /// Regress the state derivative of `Y_{i+1}` (Gaussian integration by parts).
    #[default]
    PathwiseDerivative,
    /// Regress `(Y_{i+1} - E_i Y_{i+1}) dW_i / ds`.
    IncrementWeight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub n_time: usize,
    pub n_particles: usize,
    pub basis_degree: usize,
    pub ridge: f64,
    pub picard_max_iter: usize,
    pub picard_tol: f64,
    pub z_estimator: ZEstimator,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n_time: 64,
            n_particles: 20_000,
            basis_degree: 4,
            ridge: 1e-8,
            picard_max_iter: 10,
            picard_tol: 1e-3,
            z_estimator: ZEstimator::PathwiseDerivative,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_time < 2 {
            return Err(Error::InvalidConfig("solver.n_time must be at least 2".into()));
        }
        if self.n_particles < 10 * (self.basis_degree + 1) {
            return Err(Error::InvalidConfig(format!(
                "solver.n_particles must be at least 10 * (basis_degree + 1) = {}",
                10 * (self.basis_degree + 1)
            )));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidConfig("solver.ridge must be nonnegative".into()));
        }
        if !(self.picard_tol > 0.0) {
            return Err(Error::InvalidConfig("solver.picard_tol must be positive".into()));
        }
        if self.picard_max_iter == 0 {
            return Err(Error::InvalidConfig("solver.picard_max_iter must be positive".into()));
        }
        Ok(())
    }

    pub fn with_n_time(&self, n_time: usize) -> Self {
        Self {
            n_time,
            ..self.clone()
        }
    }
}

/// Joint samples of `(W, Y, Z)` at every clock node, stored node-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleCloud {
    pub s: Vec<f64>,
    pub w: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
}

impl ParticleCloud {
    pub fn n_nodes(&self) -> usize {
        self.s.len()
    }

    pub fn n_particles(&self) -> usize {
        self.w.first().map_or(0, Vec::len)
    }

    pub fn features(&self, node: usize) -> Result<LawFeatures> {
        LawFeatures::from_samples(&self.w[node], &self.y[node], &self.z[node])
    }
}

/// Regression representation of `u~(s_i, .)` and `v~(s_i, .)` at each node,
/// together with the clock used to read it on the original time axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionField {
    pub clock: VarianceClock,
    pub u: Vec<Polynomial>,
    pub v: Vec<Polynomial>,
    /// Law of `(W, Y, Z)` at each node.
    pub features: Vec<LawFeatures>,
    /// Sup-W2 change of `Y` per Picard iteration.
    pub picard_log: Vec<f64>,
    /// RMS of `u~(V_T, W) - g(W)` over the terminal particles.
    pub terminal_rms: f64,
    /// Cross-particle standard deviation of the one-step targets at the first node.
    pub origin_dispersion: f64,
}

impl SolutionField {
    pub fn n_nodes(&self) -> usize {
        self.u.len()
    }

    /// `(u(t, x), v(t, x))` with `u(t, .) = u~(V_t, .)`: linear blend of `u~`
    /// between nodes, `v~` held from the left node.
    pub fn transfer_evaluate(&self, t: f64, x: f64) -> Result<(f64, f64)> {
        let s = self.clock.value(t)?;
        let sv = self.clock.variances();
        let i = self.clock.node_index_of_variance(s);
        if sv[i] == s || i + 1 == sv.len() {
            return Ok((self.u[i].eval(x), self.v[i].eval(x)));
        }
        let w = (s - sv[i]) / (sv[i + 1] - sv[i]);
        let y = (1.0 - w) * self.u[i].eval(x) + w * self.u[i + 1].eval(x);
        Ok((y, self.v[i].eval(x)))
    }

    /// Monomial coefficient of `w^k` in `u~(s_i, w)`.
    pub fn u_coeff(&self, node: usize, k: usize) -> f64 {
        self.u[node].coeff(k)
    }
}

/// `(u(t, x), v(t, x))` read through the clock.
pub fn transfer_evaluate(field: &SolutionField, t: f64, x: f64) -> Result<(f64, f64)> {
    field.transfer_evaluate(t, x)
}

/// Brownian paths `W~` on the variance grid, with the `W~_0 = 0` column prepended.
fn sample_auxiliary(clock: &VarianceClock, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let sv = clock.variances();
    let spec = GaussianDriverSpec {
        kind: DriverKind::Brownian,
        horizon: clock.total_variance(),
    };
    let batch: PathBatch = crate::clock::sample_paths(&spec, &sv[1..], n, seed)?;
    let mut w = Vec::with_capacity(sv.len());
    w.push(vec![0.0; n]);
    for j in 0..batch.n_times() {
        w.push(batch.column(j));
    }
    Ok(w)
}

struct Pass {
    u: Vec<Polynomial>,
    v: Vec<Polynomial>,
    y: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    origin_dispersion: f64,
}

struct Backward<'a> {
    terminal: &'a TerminalSpec,
    generator: &'a GeneratorSpec,
    clock: &'a VarianceClock,
    w: &'a [Vec<f64>],
    regressor: Regressor,
    z_estimator: ZEstimator,
}

impl Backward<'_> {
    fn run(&self, features: Option<&[LawFeatures]>) -> Result<Pass> {
        let sv = self.clock.variances();
        let tv = self.clock.times();
        let nn = sv.len();
        let last = nn - 1;
        let np = self.w[0].len();
        let zero_gen = GeneratorSpec::zero();
        let generator = if features.is_some() { self.generator } else { &zero_gen };
        let terminal_features = LawFeatures::from_samples(&self.w[last], &self.w[last], &self.w[last])?;

        let mut u = vec![Polynomial::zero(); nn];
        let mut v = vec![Polynomial::zero(); nn];
        let mut y = vec![Vec::new(); nn];
        let mut z = vec![Vec::new(); nn];

        let wl = &self.w[last];
        y[last] = wl.iter().map(|&x| self.terminal.eval(x, &terminal_features)).collect();
        z[last] = wl.iter().map(|&x| self.terminal.derivative_x(x)).collect();
        let scale_last = sv[last].sqrt();
        u[last] = self.regressor.fit(wl, &y[last], scale_last)?;
        v[last] = self.regressor.fit(wl, &z[last], scale_last)?;
        let mut deriv_next: Vec<f64> = z[last].clone();
        let mut origin_dispersion = 0.0;

        for i in (0..last).rev() {
            let ds = sv[i + 1] - sv[i];
            let t = tv[i];
            let wi = &self.w[i];
            let wn = &self.w[i + 1];
            let feat = features.map(|f| f[i]).unwrap_or_default();
            if sv[i] == 0.0 {
                // degenerate state: smooth the next node's representation exactly
                let sigma = ds.sqrt();
                let next = &u[i + 1];
                let proj = next.gaussian_smooth(sigma);
                let zp = next.derivative().gaussian_smooth(sigma);
                let h: Vec<f64> = wn
                    .iter()
                    .map(|&x| {
                        let p = proj.eval(x);
                        p + ds * generator.eval(t, x, p, zp.eval(x), &feat)
                    })
                    .collect();
                u[i] = self.regressor.fit(wn, &h, sigma)?;
                v[i] = zp;
                let y0: Vec<f64> = wi.iter().map(|&x| u[i].eval(x)).collect();
                let z0: Vec<f64> = wi.iter().map(|&x| v[i].eval(x)).collect();
                let targets: Vec<f64> = (0..np)
                    .map(|p| y[i + 1][p] - z0[p] * (wn[p] - wi[p]))
                    .collect();
                origin_dispersion = std_dev(&targets);
                deriv_next = wi.iter().map(|&x| u[i].derivative().eval(x)).collect();
                y[i] = y0;
                z[i] = z0;
                continue;
            }
            let scale = sv[i].sqrt();
            let z_target: Vec<f64> = match self.z_estimator {
                ZEstimator::PathwiseDerivative => deriv_next.clone(),
                ZEstimator::IncrementWeight => {
                    let plain = self.regressor.fit(wi, &y[i + 1], scale)?;
                    (0..np)
                        .map(|p| (y[i + 1][p] - plain.eval(wi[p])) * (wn[p] - wi[p]) / ds)
                        .collect()
                }
            };
            v[i] = self.regressor.fit(wi, &z_target, scale)?;
            let zi: Vec<f64> = wi.iter().map(|&x| v[i].eval(x)).collect();
            let y_target: Vec<f64> = (0..np)
                .map(|p| y[i + 1][p] - zi[p] * (wn[p] - wi[p]))
                .collect();
            let proj = self.regressor.fit(wi, &y_target, scale)?;
            let h: Vec<f64> = (0..np)
                .map(|p| {
                    let pr = proj.eval(wi[p]);
                    pr + ds * generator.eval(t, wi[p], pr, zi[p], &feat)
                })
                .collect();
            u[i] = self.regressor.fit(wi, &h, scale)?;
            let du = u[i].derivative();
            y[i] = wi.iter().map(|&x| u[i].eval(x)).collect();
            deriv_next = wi.iter().map(|&x| du.eval(x)).collect();
            z[i] = zi;
        }
        Ok(Pass {
            u,
            v,
            y,
            z,
            origin_dispersion,
        })
    }
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n).sqrt()
}

fn features_of(w: &[Vec<f64>], y: &[Vec<f64>], z: &[Vec<f64>]) -> Result<Vec<LawFeatures>> {
    (0..w.len())
        .map(|i| LawFeatures::from_samples(&w[i], &y[i], &z[i]))
        .collect()
}

fn sup_w2_change(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let mut sx = x.clone();
            let mut sy = y.clone();
            sx.sort_by(|p, q| p.total_cmp(q));
            sy.sort_by(|p, q| p.total_cmp(q));
            sorted_distance(&sx, &sy, 2.0)
        })
        .fold(0.0, f64::max)
}

/// Solves the auxiliary equation `dY = -f(U_s, W, Y, Z, L_(W,Y,Z)) ds + Z dW`,
/// `Y_{V_T} = g(W_{V_T}, L_{W_{V_T}})` on the variance grid of `clock`.
pub fn solve_auxiliary(
    scn: &ScenarioSpec,
    clock: &VarianceClock,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<(SolutionField, ParticleCloud)> {
    cfg.validate()?;
    scn.terminal.validate()?;
    scn.generator.validate()?;
    if clock.len() != cfg.n_time + 1 {
        return Err(Error::GridMismatch(format!(
            "clock has {} nodes but solver.n_time = {}",
            clock.len(),
            cfg.n_time
        )));
    }
    let l_f = scn.generator.lipschitz();
    let max_ds = clock
        .variances()
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);
    if max_ds * l_f > 0.5 {
        return Err(Error::InvalidConfig(format!(
            "explicit scheme needs ds * L_f <= 0.5, got {:.4} (refine solver.n_time)",
            max_ds * l_f
        )));
    }
    let w = sample_auxiliary(clock, cfg.n_particles, seed)?;
    let backward = Backward {
        terminal: &scn.terminal,
        generator: &scn.generator,
        clock,
        w: &w,
        regressor: Regressor::new(cfg.basis_degree, cfg.ridge),
        z_estimator: cfg.z_estimator,
    };

    let mut picard_log = Vec::new();
    let pass = if !scn.generator.depends_on_law() {
        // the law features never enter the computation: one pass is the fixed point
        let no_features = vec![LawFeatures::default(); clock.len()];
        picard_log.push(0.0);
        backward.run(Some(&no_features))?
    } else {
        let init = backward.run(None)?;
        let zeros: Vec<Vec<f64>> = init.z.iter().map(|c| vec![0.0; c.len()]).collect();
        let mut features = features_of(&w, &init.y, &zeros)?;
        let mut previous = init;
        let mut converged = None;
        for _ in 0..cfg.picard_max_iter {
            let next = backward.run(Some(&features))?;
            let change = sup_w2_change(&next.y, &previous.y);
            picard_log.push(change);
            features = features_of(&w, &next.y, &next.z)?;
            previous = next;
            if change < cfg.picard_tol {
                converged = Some(());
                break;
            }
        }
        if converged.is_none() {
            let k = picard_log.len();
            return Err(Error::PicardDivergence {
                iterations: k,
                tol: cfg.picard_tol,
                last: picard_log[k.saturating_sub(2)..].to_vec(),
            });
        }
        previous
    };

    let last = clock.len() - 1;
    let terminal_features = LawFeatures::from_samples(&w[last], &w[last], &w[last])?;
    let terminal_rms = (w[last]
        .iter()
        .map(|&x| {
            let d = pass.u[last].eval(x) - scn.terminal.eval(x, &terminal_features);
            d * d
        })
        .sum::<f64>()
        / cfg.n_particles as f64)
        .sqrt();
    let features = features_of(&w, &pass.y, &pass.z)?;
    let field = SolutionField {
        clock: clock.clone(),
        u: pass.u,
        v: pass.v,
        features,
        picard_log,
        terminal_rms,
        origin_dispersion: pass.origin_dispersion,
    };
    let cloud = ParticleCloud {
        s: clock.variances().to_vec(),
        w,
        y: pass.y,
        z: pass.z,
    };
    Ok((field, cloud))
}

/// Value of the small-interval problem at its left end, with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepresentationValue {
    pub value: f64,
    /// Monte Carlo standard error scale: terminal standard deviation over `sqrt(n)`.
    pub std_error: f64,
    /// Cross-particle standard deviation of the one-step targets at time `t`.
    pub cross_sd: f64,
    pub delta_v: f64,
}

/// Solves the problem on `[t, t + eps]` with terminal `y + z (X_{t+eps} - X_t)`
/// through its auxiliary equation on `[V_t, V_{t+eps}]` and returns `Y^eps_t`.
pub fn representation_solve(
    scn: &ScenarioSpec,
    t: f64,
    eps: f64,
    y: f64,
    z: f64,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<RepresentationValue> {
    if scn.generator.c1 != 0.0 {
        return Err(Error::UnsupportedScenario(
            "representation needs a generator without explicit x dependence (c1 = 0)".into(),
        ));
    }
    if !(t >= 0.0 && eps > 0.0 && t + eps <= scn.driver.horizon * (1.0 + 1e-12)) {
        return Err(Error::OutOfRange {
            what: "t + eps",
            value: t + eps,
            lo: 0.0,
            hi: scn.driver.horizon,
        });
    }
    let clock = VarianceClock::window(&scn.driver, t, t + eps, cfg.n_time)?;
    let local = ScenarioSpec {
        terminal: TerminalSpec::affine(y, z),
        generator: scn.generator.clone(),
        driver: scn.driver.clone(),
    };
    let (field, cloud) = solve_auxiliary(&local, &clock, cfg, seed)?;
    let last = cloud.n_nodes() - 1;
    let n = cloud.n_particles() as f64;
    Ok(RepresentationValue {
        value: field.u[0].eval(0.0),
        std_error: std_dev(&cloud.y[last]) / n.sqrt(),
        cross_sd: field.origin_dispersion,
        delta_v: clock.total_variance(),
    })
}
