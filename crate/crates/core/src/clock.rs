//! Gaussian driver models, the variance clock `V_t = Var X_t` with its inverse,
//! and exact path sampling on a time grid.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Covariance kind of the driving process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriverKind {
    Brownian,
    Fbm { hurst: f64 },
    Custom(CustomCovariance),
}

/// Covariance table on the uniform grid `t_k = k T / m`, `k = 1..=m`.
///
/// Off-grid values are bilinear interpolations, with the covariance pinned to
/// zero on the axes `s = 0` and `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomCovariance {
    pub horizon: f64,
    /// Full symmetric matrix, row-major, `m x m`.
    pub matrix: Vec<f64>,
    pub size: usize,
}

impl CustomCovariance {
    /// Builds from lower-triangular rows, row `i` holding `i + 1` entries.
    pub fn from_lower_triangular(horizon: f64, rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::InvalidDriver("covariance table is empty".into()));
        }
        let mut matrix = vec![0.0; m * m];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != i + 1 {
                return Err(Error::InvalidDriver(format!(
                    "covariance row {i} has {} entries, expected {}",
                    row.len(),
                    i + 1
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidDriver(format!(
                        "covariance entry ({i},{j}) is not finite"
                    )));
                }
                matrix[i * m + j] = v;
                matrix[j * m + i] = v;
            }
        }
        Ok(Self {
            horizon,
            matrix,
            size: m,
        })
    }

    /// Parses the comma-separated lower-triangular table.
    pub fn parse_csv(horizon: f64, text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|_| {
                        Error::InvalidDriver(format!(
                            "covariance_file line {}: cannot parse {tok:?}",
                            lineno + 1
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::from_lower_triangular(horizon, &rows)
    }

    /// Grid times `t_1 ..= t_m`.
    pub fn grid(&self) -> Vec<f64> {
        (1..=self.size)
            .map(|k| self.horizon * k as f64 / self.size as f64)
            .collect()
    }

    fn node_value(&self, i: usize, j: usize) -> f64 {
        // node 0 is t = 0
        if i == 0 || j == 0 {
            0.0
        } else {
            self.matrix[(i - 1) * self.size + (j - 1)]
        }
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let h = self.horizon / self.size as f64;
        let pos = (t / h).clamp(0.0, self.size as f64);
        let i = (pos.floor() as usize).min(self.size - 1);
        (i, pos - i as f64)
    }

    fn eval(&self, s: f64, t: f64) -> f64 {
        let (i, a) = self.locate(s);
        let (j, b) = self.locate(t);
        let c00 = self.node_value(i, j);
        let c10 = self.node_value(i + 1, j);
        let c01 = self.node_value(i, j + 1);
        let c11 = self.node_value(i + 1, j + 1);
        (1.0 - a) * (1.0 - b) * c00 + a * (1.0 - b) * c10 + (1.0 - a) * b * c01 + a * b * c11
    }
}

/// A Gaussian driver `X` on `[0, T]` with `X_0 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianDriverSpec {
    pub kind: DriverKind,
    pub horizon: f64,
}

impl GaussianDriverSpec {
    pub fn brownian(horizon: f64) -> Self {
        Self {
            kind: DriverKind::Brownian,
            horizon,
        }
    }

    pub fn fbm(hurst: f64, horizon: f64) -> Self {
        Self {
            kind: DriverKind::Fbm { hurst },
            horizon,
        }
    }

    pub fn custom(table: CustomCovariance) -> Self {
        let horizon = table.horizon;
        Self {
            kind: DriverKind::Custom(table),
            horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidDriver(format!(
                "T must be positive and finite, got {}",
                self.horizon
            )));
        }
        match &self.kind {
            DriverKind::Brownian => Ok(()),
            DriverKind::Fbm { hurst } => {
                if *hurst > 0.0 && *hurst < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidDriver(format!(
                        "hurst must be in (0,1), got {hurst}"
                    )))
                }
            }
            DriverKind::Custom(table) => {
                if (table.horizon - self.horizon).abs() > 1e-12 * self.horizon {
                    return Err(Error::InvalidDriver(
                        "custom covariance horizon differs from T".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Short tag used in reports and digests.
    pub fn tag(&self) -> String {
        match &self.kind {
            DriverKind::Brownian => format!("brownian(T={})", self.horizon),
            DriverKind::Fbm { hurst } => format!("fbm(H={hurst},T={})", self.horizon),
            DriverKind::Custom(c) => format!("custom(m={},T={})", c.size, self.horizon),
        }
    }

    pub fn is_brownian(&self) -> bool {
        matches!(self.kind, DriverKind::Brownian)
            || matches!(self.kind, DriverKind::Fbm { hurst } if hurst == 0.5)
    }
}

/// `E[X_s X_t]`.
pub fn covariance(spec: &GaussianDriverSpec, s: f64, t: f64) -> Result<f64> {
    let horizon = spec.horizon;
    for (what, v) in [("s", s), ("t", t)] {
        if !(0.0..=horizon * (1.0 + 1e-12)).contains(&v) {
            return Err(Error::OutOfRange {
                what,
                value: v,
                lo: 0.0,
                hi: horizon,
            });
        }
    }
    Ok(covariance_unchecked(spec, s, t))
}

pub(crate) fn covariance_unchecked(spec: &GaussianDriverSpec, s: f64, t: f64) -> f64 {
    match &spec.kind {
        DriverKind::Brownian => s.min(t),
        DriverKind::Fbm { hurst } => {
            let h2 = 2.0 * hurst;
            0.5 * (s.powf(h2) + t.powf(h2) - (t - s).abs().powf(h2))
        }
        DriverKind::Custom(table) => table.eval(s, t),
    }
}

/// Covariance matrix on `grid`.
pub fn covariance_matrix(spec: &GaussianDriverSpec, grid: &[f64]) -> DMatrix<f64> {
    let n = grid.len();
    DMatrix::from_fn(n, n, |i, j| covariance_unchecked(spec, grid[i], grid[j]))
}

/// Variance function `V` tabulated on a grid, with monotone piecewise-linear
/// interpolation for both `V` and its inverse `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceClock {
    grid_t: Vec<f64>,
    grid_v: Vec<f64>,
}

impl VarianceClock {
    /// Clock from explicit tables; `grid_v[0]` must be zero and both tables
    /// strictly increasing.
    pub fn from_tables(grid_t: Vec<f64>, grid_v: Vec<f64>) -> Result<Self> {
        if grid_t.len() != grid_v.len() || grid_t.len() < 2 {
            return Err(Error::InvalidGrid(
                "clock needs at least two nodes and equal-length tables".into(),
            ));
        }
        if grid_v[0] != 0.0 {
            return Err(Error::InvalidGrid(format!(
                "clock must start at V = 0, got {}",
                grid_v[0]
            )));
        }
        for i in 1..grid_t.len() {
            if !(grid_t[i] > grid_t[i - 1]) {
                return Err(Error::InvalidGrid(format!(
                    "time grid not strictly increasing at node {i}"
                )));
            }
            let step = grid_v[i] - grid_v[i - 1];
            if !(step > 0.0) {
                return Err(Error::NonMonotoneVariance { index: i, step });
            }
        }
        Ok(Self { grid_t, grid_v })
    }

    /// Clock of `spec` sampled on an explicit grid starting at 0.
    pub fn on_grid(spec: &GaussianDriverSpec, grid_t: &[f64]) -> Result<Self> {
        spec.validate()?;
        if grid_t.first() != Some(&0.0) {
            return Err(Error::InvalidGrid("clock grid must start at t = 0".into()));
        }
        if let Some(&last) = grid_t.last() {
            if last > spec.horizon * (1.0 + 1e-12) {
                return Err(Error::InvalidGrid(format!(
                    "grid ends at {last} beyond T = {}",
                    spec.horizon
                )));
            }
        }
        let grid_v = grid_t
            .iter()
            .map(|&t| covariance_unchecked(spec, t, t))
            .collect();
        Self::from_tables(grid_t.to_vec(), grid_v)
    }

    /// Clock restricted to `[start, end]` and shifted so that it reads zero at `start`.
    pub fn window(spec: &GaussianDriverSpec, start: f64, end: f64, n_steps: usize) -> Result<Self> {
        spec.validate()?;
        if n_steps == 0 || !(start >= 0.0 && end > start && end <= spec.horizon * (1.0 + 1e-12)) {
            return Err(Error::InvalidGrid(format!(
                "invalid window [{start}, {end}] with {n_steps} steps"
            )));
        }
        let v0 = covariance_unchecked(spec, start, start);
        let v1 = covariance_unchecked(spec, end, end);
        if !(v1 - v0 > 0.0) {
            return Err(Error::DegenerateInterval(v1 - v0));
        }
        let grid_t: Vec<f64> = (0..=n_steps)
            .map(|k| {
                if k == n_steps {
                    end
                } else {
                    start + (end - start) * k as f64 / n_steps as f64
                }
            })
            .collect();
        let grid_v = grid_t
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                if k == 0 {
                    0.0
                } else {
                    covariance_unchecked(spec, t, t) - v0
                }
            })
            .collect();
        Self::from_tables(grid_t, grid_v)
    }

    pub fn times(&self) -> &[f64] {
        &self.grid_t
    }

    pub fn variances(&self) -> &[f64] {
        &self.grid_v
    }

    pub fn len(&self) -> usize {
        self.grid_t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid_t.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.grid_t[0]
    }

    pub fn end(&self) -> f64 {
        *self.grid_t.last().expect("nonempty clock")
    }

    /// `V_T`, the total variance accumulated over the clock.
    pub fn total_variance(&self) -> f64 {
        *self.grid_v.last().expect("nonempty clock")
    }

    /// `V(t)` by piecewise-linear interpolation.
    pub fn value(&self, t: f64) -> Result<f64> {
        let (lo, hi) = (self.start(), self.end());
        let tol = 1e-12 * hi.abs().max(1.0);
        if t < lo - tol || t > hi + tol {
            return Err(Error::OutOfRange {
                what: "t",
                value: t,
                lo,
                hi,
            });
        }
        Ok(interpolate(&self.grid_t, &self.grid_v, t.clamp(lo, hi)))
    }

    /// `U(s) = inf { t : V(t) >= s }`, interpolated.
    pub fn invert(&self, s: f64) -> Result<f64> {
        let vt = self.total_variance();
        let tol = 1e-12 * vt.max(1.0);
        if s < -tol || s > vt + tol {
            return Err(Error::OutOfRange {
                what: "s",
                value: s,
                lo: 0.0,
                hi: vt,
            });
        }
        Ok(interpolate(&self.grid_v, &self.grid_t, s.clamp(0.0, vt)))
    }

    /// Index `i` with `times[i] <= t < times[i+1]`, or the last index when `t` is the end point.
    pub fn node_index_of_variance(&self, s: f64) -> usize {
        locate(&self.grid_v, s)
    }
}

fn locate(xs: &[f64], x: f64) -> usize {
    match xs.binary_search_by(|probe| probe.partial_cmp(&x).expect("finite grid")) {
        Ok(i) => i,
        Err(i) => i.saturating_sub(1).min(xs.len() - 1),
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = locate(xs, x);
    if xs[i] == x || i + 1 == xs.len() {
        return ys[i];
    }
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + w * (ys[i + 1] - ys[i])
}

/// Uniform clock with `n_nodes` nodes on `[0, T]`.
pub fn build_clock(spec: &GaussianDriverSpec, n_nodes: usize) -> Result<VarianceClock> {
    if n_nodes < 2 {
        return Err(Error::InvalidGrid(format!(
            "need at least 2 clock nodes, got {n_nodes}"
        )));
    }
    spec.validate()?;
    let grid: Vec<f64> = match &spec.kind {
        DriverKind::Custom(table) => {
            if n_nodes != table.size + 1 {
                return Err(Error::InvalidGrid(format!(
                    "custom covariance defines {} nodes, requested {}",
                    table.size + 1,
                    n_nodes
                )));
            }
            std::iter::once(0.0).chain(table.grid()).collect()
        }
        _ => (0..n_nodes)
            .map(|i| {
                if i + 1 == n_nodes {
                    spec.horizon
                } else {
                    spec.horizon * i as f64 / (n_nodes - 1) as f64
                }
            })
            .collect(),
    };
    VarianceClock::on_grid(spec, &grid)
}

/// `U(s)` for the clock.
pub fn invert_clock(clock: &VarianceClock, s: f64) -> Result<f64> {
    clock.invert(s)
}

/// Sampled paths, one row per path, one column per grid time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathBatch {
    pub grid_t: Vec<f64>,
    pub n_paths: usize,
    samples: Vec<f64>,
    pub seed: u64,
    pub driver: String,
}

impl PathBatch {
    pub fn n_times(&self) -> usize {
        self.grid_t.len()
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let n = self.n_times();
        &self.samples[i * n..(i + 1) * n]
    }

    pub fn value(&self, path: usize, time: usize) -> f64 {
        self.samples[path * self.n_times() + time]
    }

    pub fn column(&self, time: usize) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.value(i, time)).collect()
    }

    pub fn raw(&self) -> &[f64] {
        &self.samples
    }
}

/// Lower Cholesky factor, retrying once with a `1e-12 * trace` jitter.
pub fn cholesky_with_jitter(cov: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = cov.clone().cholesky() {
        return Ok(ch.l());
    }
    let n = cov.nrows();
    let jitter = 1e-12 * cov.trace();
    let mut jittered = cov;
    for i in 0..n {
        jittered[(i, i)] += jitter;
    }
    match jittered.clone().cholesky() {
        Some(ch) => Ok(ch.l()),
        None => {
            let pivot = (0..n).find(|&i| jittered[(i, i)] <= 0.0).unwrap_or(0);
            Err(Error::CholeskyFailure { pivot })
        }
    }
}

fn check_sampling_grid(horizon: f64, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("sampling grid is empty".into()));
    }
    if !(grid[0] > 0.0) {
        return Err(Error::InvalidGrid(
            "sampling grid must lie strictly inside (0, T]".into(),
        ));
    }
    for w in grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidGrid(
                "sampling grid must be strictly increasing".into(),
            ));
        }
    }
    if grid[grid.len() - 1] > horizon * (1.0 + 1e-12) {
        return Err(Error::InvalidGrid("sampling grid exceeds T".into()));
    }
    Ok(())
}

/// Exact joint samples of the driver on `grid_t` (strictly inside `(0, T]`).
///
/// Brownian drivers are sampled by independent increments, every other kind by
/// a dense Cholesky factor of the covariance matrix. Path `i` always consumes the
/// stream `(seed, i)`.
pub fn sample_paths(
    spec: &GaussianDriverSpec,
    grid_t: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<PathBatch> {
    spec.validate()?;
    check_sampling_grid(spec.horizon, grid_t)?;
    let n = grid_t.len();
    let mut samples = vec![0.0; n_paths * n];
    if matches!(spec.kind, DriverKind::Brownian) {
        let sd: Vec<f64> = std::iter::once(grid_t[0])
            .chain(grid_t.windows(2).map(|w| w[1] - w[0]))
            .map(f64::sqrt)
            .collect();
        samples
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| {
                rng::fill_standard_normal(seed, i as u64, row);
                let mut acc = 0.0;
                for (v, s) in row.iter_mut().zip(&sd) {
                    acc += *v * s;
                    *v = acc;
                }
            });
    } else {
        let l = cholesky_with_jitter(covariance_matrix(spec, grid_t))?;
        samples
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| {
                let mut z = vec![0.0; n];
                rng::fill_standard_normal(seed, i as u64, &mut z);
                for r in 0..n {
                    let mut acc = 0.0;
                    for c in 0..=r {
                        acc += l[(r, c)] * z[c];
                    }
                    row[r] = acc;
                }
            });
    }
    Ok(PathBatch {
        grid_t: grid_t.to_vec(),
        n_paths,
        samples,
        seed,
        driver: spec.tag(),
    })
}
