use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("variance clock is not strictly increasing at node {index} (step {step:e})")]
    NonMonotoneVariance { index: usize, step: f64 },
    #[error("{what} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid driver: {0}")]
    InvalidDriver(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("covariance matrix is not numerically positive semidefinite (pivot {pivot})")]
    CholeskyFailure { pivot: usize },
    #[error("measure has no atoms")]
    EmptyMeasure,
    #[error("reference law is degenerate and differs from the argument; relative entropy is +inf")]
    DegenerateReference,
    #[error("test function has nonpositive mass {0:e}")]
    NonpositiveMass(f64),
    #[error("unsupported law functional: {0}")]
    UnsupportedFunctional(String),
    #[error("Lipschitz probe ratio {observed:e} exceeds symbolic constant {symbolic:e} for {which}")]
    ProbeViolation {
        which: &'static str,
        observed: f64,
        symbolic: f64,
    },
    #[error("particle cloud is empty")]
    EmptyCloud,
    #[error("Picard iteration did not reach tolerance {tol:e} in {iterations} iterations (last changes {last:?})")]
    PicardDivergence {
        iterations: usize,
        tol: f64,
        last: Vec<f64>,
    },
    #[error("regression normal equations ill-conditioned (condition estimate {0:e})")]
    RegressionIllConditioned(f64),
    #[error("degenerate interval: V(t+eps) - V(t) = {0:e}")]
    DegenerateInterval(f64),
    #[error("degenerate increment: Var(dX) = {0:e}")]
    DegenerateIncrement(f64),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("hypothesis not satisfied: {0}")]
    HypothesisUnsatisfied(String),
    #[error("hypothesis not observed: {0}")]
    HypothesisUnobserved(String),
    #[error("unsupported scenario: {0}")]
    UnsupportedScenario(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
