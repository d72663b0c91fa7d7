//! Configuration, orchestration and report emission for the `gaussbsde` binary.

pub mod config;
pub mod emit;
pub mod error;
pub mod experiments;
pub mod pack;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{CliError, Result};
pub use experiments::Outcome;

/// Command-line overrides of config values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub manifest: PathBuf,
    pub outcomes: Vec<Outcome>,
}

impl RunSummary {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| !o.report.failed())
    }

    /// `0` when every asserted check passes, `2` otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.all_passed() {
            0
        } else {
            2
        }
    }
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Parses and validates a config file without running it.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load(path)?;
    cfg.validate(&base_dir(path))?;
    Ok(cfg)
}

/// Runs an already parsed config; `base` resolves relative file references.
/// Nothing is written unless every experiment completes.
pub fn run_config(mut cfg: ExperimentConfig, base: &Path, overrides: &Overrides) -> Result<RunSummary> {
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    let out_dir = overrides
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("gaussbsde-out"));
    let start = Instant::now();
    let jobs = experiments::plan(&cfg, base)?;
    let outcomes = experiments::execute(&jobs, &cfg.solver)?;
    let emitted = emit::emit_report(&outcomes, &out_dir)?;
    let manifest = emit::write_manifest(
        &out_dir,
        &cfg.digest(),
        cfg.kind.name(),
        cfg.seed,
        &outcomes,
        &emitted,
        start.elapsed().as_millis(),
    )?;
    Ok(RunSummary {
        out_dir,
        manifest,
        outcomes,
    })
}

/// Loads `config_path` and runs it.
pub fn run(config_path: &Path, overrides: &Overrides) -> Result<RunSummary> {
    let cfg = ExperimentConfig::load(config_path)?;
    run_config(cfg, &base_dir(config_path), overrides)
}

/// Runs a config file and maps the outcome to the process exit code:
/// `0` all checks pass, `2` a check failed, `1` configuration or runtime error.
pub fn run_experiment(config_path: &Path) -> i32 {
    match run(config_path, &Overrides::default()) {
        Ok(s) => s.exit_code(),
        Err(_) => 1,
    }
}
