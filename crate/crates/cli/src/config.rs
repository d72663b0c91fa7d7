//! TOML experiment configuration: parsing, validation and canonical emission.

use std::collections::BTreeMap;
use std::path::Path;

use gaussbsde_core::{
    CustomCovariance, DriverKind, GaussianDriverSpec, GeneratorSpec, ScenarioSpec, SolverConfig,
    TerminalSpec,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::pack;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Solve,
    WickValidate,
    Comparison,
    Representation,
    Converse,
    Stability,
    T2,
    Lsi,
    Zbound,
    FullSuite,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::WickValidate => "wick_validate",
            Self::Comparison => "comparison",
            Self::Representation => "representation",
            Self::Converse => "converse",
            Self::Stability => "stability",
            Self::T2 => "t2",
            Self::Lsi => "lsi",
            Self::Zbound => "zbound",
            Self::FullSuite => "full_suite",
        }
    }

    fn needs_pair(self) -> bool {
        matches!(self, Self::Comparison | Self::Converse | Self::Stability)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverName {
    Brownian,
    Fbm,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverConfig {
    pub kind: DriverName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hurst: Option<f64>,
    #[serde(default = "default_horizon", rename = "T")]
    pub horizon: f64,
    /// Lower-triangular covariance CSV, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance_file: Option<String>,
}

fn default_horizon() -> f64 {
    1.0
}

impl Default for DriverConfig {
    fn default() -> Self {
        Self {
            kind: DriverName::Brownian,
            hurst: None,
            horizon: 1.0,
            covariance_file: None,
        }
    }
}

impl DriverConfig {
    pub fn fbm(hurst: f64, horizon: f64) -> Self {
        Self {
            kind: DriverName::Fbm,
            hurst: Some(hurst),
            horizon,
            covariance_file: None,
        }
    }

    /// Resolves to a validated driver; `key` names the table for messages.
    pub fn resolve(&self, key: &str, base: &Path) -> Result<GaussianDriverSpec> {
        let invalid = |msg: String| CliError::ConfigInvalid(format!("{key}: {msg}"));
        let kind = match self.kind {
            DriverName::Brownian => DriverKind::Brownian,
            DriverName::Fbm => DriverKind::Fbm {
                hurst: self
                    .hurst
                    .ok_or_else(|| invalid("hurst is required for kind = \"fbm\"".into()))?,
            },
            DriverName::Custom => {
                let file = self.covariance_file.as_ref().ok_or_else(|| {
                    invalid("covariance_file is required for kind = \"custom\"".into())
                })?;
                let path = base.join(file);
                let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
                DriverKind::Custom(
                    CustomCovariance::parse_csv(self.horizon, &text)
                        .map_err(|e| invalid(format!("covariance_file: {e}")))?,
                )
            }
        };
        let spec = GaussianDriverSpec {
            kind,
            horizon: self.horizon,
        };
        spec.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub terminal: TerminalSpec,
    #[serde(default)]
    pub generator: GeneratorSpec,
    /// Overrides the top-level driver.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driver: Option<DriverConfig>,
}

/// Kind-specific parameters; unused ones are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenarios: Option<Vec<String>>,
    /// Evaluation times; empty means `{0, T/4, T/2, 3T/4, T}`.
    pub t_list: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    pub y: f64,
    pub z: f64,
    pub eps_list: Vec<f64>,
    pub eps: f64,
    /// `[t, y, z]` rows; empty means the default 3 x 3 grid.
    pub probes: Vec<[f64; 3]>,
    pub shifts: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub n_paths: usize,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self {
            scenario: None,
            scenarios: None,
            t_list: Vec::new(),
            t: None,
            y: 1.0,
            z: 0.5,
            eps_list: vec![0.2, 0.1, 0.05],
            eps: 0.05,
            probes: Vec::new(),
            shifts: vec![0.0, 0.5, 1.0, 2.0],
            lambdas: vec![0.0, 0.5, 1.0, 2.0],
            n_paths: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub driver: DriverConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Merged over the built-in pack; a name here replaces the pack entry.
    #[serde(default)]
    pub scenarios: BTreeMap<String, ScenarioConfig>,
    #[serde(default)]
    pub experiment: ExperimentParams,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::ConfigInvalid(e.message().to_string() + &span_hint(text, e.span())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    /// Canonical text form; `parse(emit(c)) == c`.
    pub fn emit(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.emit().as_bytes()))
    }

    /// Every scenario visible to the experiment: the pack, overridden by the file.
    pub fn scenario_table(&self) -> BTreeMap<String, ScenarioConfig> {
        let mut table = pack::default_pack();
        table.extend(self.scenarios.clone());
        table
    }

    pub fn resolve_scenario(&self, name: &str, base: &Path) -> Result<ScenarioSpec> {
        let table = self.scenario_table();
        let sc = table.get(name).ok_or_else(|| {
            CliError::ConfigInvalid(format!("experiment: unknown scenario \"{name}\""))
        })?;
        let (key, driver_cfg) = match &sc.driver {
            Some(d) => (format!("scenarios.{name}.driver"), d),
            None => ("driver".to_string(), &self.driver),
        };
        let driver = driver_cfg.resolve(&key, base)?;
        let spec = ScenarioSpec::new(sc.terminal.clone(), sc.generator.clone(), driver);
        spec.terminal
            .validate()
            .and_then(|_| spec.generator.validate())
            .map_err(|e| CliError::ConfigInvalid(format!("scenarios.{name}: {e}")))?;
        Ok(spec)
    }

    /// Schema and cross-reference checks, without running anything.
    pub fn validate(&self, base: &Path) -> Result<()> {
        self.solver
            .validate()
            .map_err(|e| CliError::ConfigInvalid(format!("solver: {e}")))?;
        self.driver.resolve("driver", base)?;
        for name in self.scenario_table().keys() {
            self.resolve_scenario(name, base)?;
        }
        let p = &self.experiment;
        match self.kind {
            ExperimentKind::FullSuite => {}
            k if k.needs_pair() => {
                let names = p.scenarios.as_ref().ok_or_else(|| {
                    CliError::ConfigInvalid(format!(
                        "experiment.scenarios: kind = \"{}\" needs two scenario names",
                        k.name()
                    ))
                })?;
                if names.len() != 2 {
                    return Err(CliError::ConfigInvalid(
                        "experiment.scenarios: exactly two names are required".into(),
                    ));
                }
                for n in names {
                    self.resolve_scenario(n, base)?;
                }
            }
            k => {
                let name = p.scenario.as_ref().ok_or_else(|| {
                    CliError::ConfigInvalid(format!(
                        "experiment.scenario: kind = \"{}\" needs a scenario name",
                        k.name()
                    ))
                })?;
                self.resolve_scenario(name, base)?;
            }
        }
        if matches!(self.kind, ExperimentKind::Representation | ExperimentKind::T2 | ExperimentKind::Lsi)
            && p.t.is_none()
        {
            return Err(CliError::ConfigInvalid(format!(
                "experiment.t: required for kind = \"{}\"",
                self.kind.name()
            )));
        }
        if p.eps_list.windows(2).any(|w| !(w[1] < w[0])) || p.eps_list.iter().any(|e| !(*e > 0.0)) {
            return Err(CliError::ConfigInvalid(
                "experiment.eps_list: must be positive and strictly decreasing".into(),
            ));
        }
        if !(p.eps > 0.0) {
            return Err(CliError::ConfigInvalid("experiment.eps: must be positive".into()));
        }
        if p.n_paths < 2 {
            return Err(CliError::ConfigInvalid("experiment.n_paths: must be at least 2".into()));
        }
        Ok(())
    }
}

fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => {
            let line = text[..r.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}
