//! Numerical laboratory for distribution-dependent backward SDEs driven by
//! Gaussian processes.
//!
//! A Gaussian driver `X` with variance function `V_t = Var X_t` is mapped onto a
//! Brownian motion run on the clock `[0, V_T]`; the backward equation is solved
//! there by least-squares Monte Carlo and read back through `u(t, x) = u~(V_t, x)`.
//! The [`theorem_lab`] module turns comparison, representation, stability, transport,
//! log-Sobolev and `Z`-bound statements into executable checks.

pub mod clock;
pub mod error;
pub mod theorem_lab;
pub mod measures;
pub mod poly;
mod quadrature;
pub mod rng;
pub mod scenario;
pub mod solver;
pub mod wick;

pub use clock::{
    build_clock, covariance, invert_clock, sample_paths, CustomCovariance, DriverKind,
    GaussianDriverSpec, PathBatch, VarianceClock,
};
pub use error::{Error, Result};
pub use measures::{EmpiricalMeasure, GaussianLaw1D, LawFeatures};
pub use poly::Polynomial;
pub use scenario::{GeneratorSpec, Nonlinearity, ScenarioSpec, TerminalSpec};
pub use solver::{
    representation_solve, solve_auxiliary, transfer_evaluate, ParticleCloud, SolutionField,
    SolverConfig, ZEstimator,
};
