//! Fixtures shared by the benchmarks.

use gaussbsde_core::{
    build_clock, GaussianDriverSpec, GeneratorSpec, Nonlinearity, ScenarioSpec, SolverConfig,
    TerminalSpec, VarianceClock,
};

/// Lipschitz terminal with a mean-field generator on an fBm driver.
pub fn mean_field_fbm(hurst: f64) -> ScenarioSpec {
    ScenarioSpec::new(
        TerminalSpec {
            b: 1.0,
            c: 0.5,
            phi: Nonlinearity::Sin,
            ..TerminalSpec::default()
        },
        GeneratorSpec {
            c2: -0.5,
            kappa_y: 0.3,
            ..GeneratorSpec::zero()
        },
        GaussianDriverSpec::fbm(hurst, 1.0),
    )
}

pub fn config(n_time: usize, n_particles: usize) -> SolverConfig {
    SolverConfig {
        n_time,
        n_particles,
        ..SolverConfig::default()
    }
}

pub fn clock_for(scn: &ScenarioSpec, cfg: &SolverConfig) -> VarianceClock {
    build_clock(&scn.driver, cfg.n_time + 1).expect("valid driver")
}
