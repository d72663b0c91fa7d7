//! Built-in scenarios with closed-form or quadrature oracles.

use std::collections::BTreeMap;

use gaussbsde_core::{GeneratorSpec, Nonlinearity, TerminalSpec};

use crate::config::{DriverConfig, ScenarioConfig};

fn scenario(terminal: TerminalSpec, generator: GeneratorSpec) -> ScenarioConfig {
    ScenarioConfig {
        terminal,
        generator,
        driver: None,
    }
}

/// * `identity`: `f = 0`, `g = x`; solution `(Y, Z) = (X, 1)`.
/// * `constant`: `f = 1`, `g = x`; `Y_t = X_t + V_T - V_t`.
/// * `linear`: `f = y / 2`, `g = x`; `Y_t = e^{(V_T - V_t)/2} X_t`.
/// * `mean_field`: `f = 0.3 E[Y]`, `g = x + 1`; `E Y_t = e^{0.3 (V_T - V_t)}`.
/// * `mean_field_low`: `mean_field` with `g = x`, the lower member of a comparison pair.
/// * `damped_mean_field`: `f = -y + 0.3 E[Y]`, `g = x`.
/// * `mean_field_02` / `mean_field_02_up`: `f = 0.2 E[Y]` and `f = 0.2 E[Y] + 0.1`, `g = x`.
/// * `sine_fbm`: `f = 0`, `g = sin x + 2x` on fBm with `H = 0.7`; moments by quadrature.
pub fn default_pack() -> BTreeMap<String, ScenarioConfig> {
    let mut pack = BTreeMap::new();
    pack.insert("identity".into(), scenario(TerminalSpec::identity(), GeneratorSpec::zero()));
    pack.insert(
        "constant".into(),
        scenario(TerminalSpec::identity(), GeneratorSpec::constant(1.0)),
    );
    pack.insert(
        "linear".into(),
        scenario(TerminalSpec::identity(), GeneratorSpec::linear_y(0.5)),
    );
    pack.insert(
        "mean_field".into(),
        scenario(TerminalSpec::affine(1.0, 1.0), GeneratorSpec::mean_y(0.3)),
    );
    pack.insert(
        "mean_field_low".into(),
        scenario(TerminalSpec::identity(), GeneratorSpec::mean_y(0.3)),
    );
    pack.insert(
        "damped_mean_field".into(),
        scenario(
            TerminalSpec::identity(),
            GeneratorSpec {
                c2: -1.0,
                kappa_y: 0.3,
                ..GeneratorSpec::zero()
            },
        ),
    );
    pack.insert(
        "mean_field_02".into(),
        scenario(TerminalSpec::identity(), GeneratorSpec::mean_y(0.2)),
    );
    pack.insert(
        "mean_field_02_up".into(),
        scenario(
            TerminalSpec::identity(),
            GeneratorSpec {
                c0: 0.1,
                kappa_y: 0.2,
                ..GeneratorSpec::zero()
            },
        ),
    );
    pack.insert(
        "sine_fbm".into(),
        ScenarioConfig {
            terminal: TerminalSpec {
                b: 2.0,
                phi: Nonlinearity::Sin,
                c: 1.0,
                ..TerminalSpec::default()
            },
            generator: GeneratorSpec::zero(),
            driver: Some(DriverConfig::fbm(0.7, 1.0)),
        },
    );
    pack
}
