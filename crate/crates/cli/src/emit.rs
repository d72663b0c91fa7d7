//! Deterministic report files: sorted keys, floats rounded to 12 significant digits.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, Result};
use crate::experiments::Outcome;

/// Rounds to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(f) if !(n.is_i64() || n.is_u64()) => serde_json::Number::from_f64(round12(f))
                .map(Value::Number)
                .unwrap_or(Value::Null),
            _ => Value::Number(n),
        },
        Value::Array(a) => Value::Array(a.into_iter().map(round_value).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_value(v))).collect()),
        other => other,
    }
}

/// Canonical JSON text of any serializable value.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let v = round_value(serde_json::to_value(value).expect("report serializes"));
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn fmt_float(x: f64) -> String {
    let r = round12(x);
    if r.is_finite() {
        format!("{r:?}")
    } else {
        r.to_string()
    }
}

#[derive(Serialize)]
struct ReportFile<'a> {
    experiment: &'a str,
    #[serde(flatten)]
    report: &'a gaussbsde_core::theorem_lab::TheoremReport,
}

/// Paths of the files written for a set of outcomes, relative to the output directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Emitted {
    pub reports: Vec<String>,
    pub series: Vec<String>,
    pub measurements: String,
}

/// Writes `reports/<name>.json`, `series/<name>.csv` and `measurements.csv`.
pub fn emit_report(outcomes: &[Outcome], out_dir: &Path) -> Result<Emitted> {
    if outcomes.is_empty() {
        return Err(CliError::ConfigInvalid("no reports to emit".into()));
    }
    let mut emitted = Emitted {
        measurements: "measurements.csv".into(),
        ..Emitted::default()
    };
    let mut flat = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::io(out_dir.join("measurements.csv"), e);
    flat.write_record(["experiment", "theorem", "name", "value", "std_error"])
        .map_err(csv_err)?;
    for o in outcomes {
        let rel = format!("reports/{}.json", o.name);
        let text = to_canonical_json(&ReportFile {
            experiment: &o.name,
            report: &o.report,
        });
        write(&out_dir.join(&rel), text.as_bytes())?;
        emitted.reports.push(rel);
        for m in &o.report.measurements {
            flat.write_record([
                o.name.as_str(),
                o.report.theorem.as_str(),
                m.name.as_str(),
                &fmt_float(m.value),
                &m.std_error.map(fmt_float).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        if let Some(rows) = &o.series {
            let rel = format!("series/{}.csv", o.name);
            let mut w = csv::Writer::from_writer(Vec::new());
            let err = |e: csv::Error| CliError::io(out_dir.join(&rel), e);
            w.write_record(["t", "V_t", "x_quantile_tag", "Y", "Z"]).map_err(err)?;
            for r in rows {
                w.write_record([
                    fmt_float(r.t),
                    fmt_float(r.v_t),
                    r.x_quantile_tag.to_string(),
                    fmt_float(r.y),
                    fmt_float(r.z),
                ])
                .map_err(err)?;
            }
            let bytes = w.into_inner().map_err(|e| CliError::io(out_dir.join(&rel), e))?;
            write(&out_dir.join(&rel), &bytes)?;
            emitted.series.push(rel);
        }
    }
    let bytes = flat
        .into_inner()
        .map_err(|e| CliError::io(out_dir.join("measurements.csv"), e))?;
    write(&out_dir.join("measurements.csv"), &bytes)?;
    Ok(emitted)
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    experiment: &'a str,
    theorem: &'a str,
    path: &'a str,
    pass: Option<bool>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    artifact_version: &'a str,
    config_digest: &'a str,
    kind: &'a str,
    seed: u64,
    all_passed: bool,
    reports: Vec<ManifestEntry<'a>>,
    series: &'a [String],
    measurements: &'a str,
    /// Wall-clock times live in a sidecar so that the manifest is reproducible.
    timings: &'a str,
}

/// Writes `manifest.json` and the `timings.json` sidecar; returns the manifest path.
pub fn write_manifest(
    out_dir: &Path,
    config_digest: &str,
    kind: &str,
    seed: u64,
    outcomes: &[Outcome],
    emitted: &Emitted,
    total_ms: u128,
) -> Result<PathBuf> {
    let mut timings: BTreeMap<String, u128> = outcomes.iter().map(|o| (o.name.clone(), o.runtime_ms)).collect();
    timings.insert("total".into(), total_ms);
    write(&out_dir.join("timings.json"), to_canonical_json(&timings).as_bytes())?;
    let manifest = Manifest {
        artifact_version: env!("CARGO_PKG_VERSION"),
        config_digest,
        kind,
        seed,
        all_passed: outcomes.iter().all(|o| !o.report.failed()),
        reports: outcomes
            .iter()
            .zip(&emitted.reports)
            .map(|(o, p)| ManifestEntry {
                experiment: &o.name,
                theorem: &o.report.theorem,
                path: p,
                pass: o.report.pass,
            })
            .collect(),
        series: &emitted.series,
        measurements: &emitted.measurements,
        timings: "timings.json",
    };
    let path = out_dir.join("manifest.json");
    write(&path, to_canonical_json(&manifest).as_bytes())?;
    Ok(path)
}
