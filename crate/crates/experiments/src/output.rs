use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::convergence::run_convergence;
use crate::curvature::run_curvature_suite;
use crate::diagnose::run_diagnostics;
use crate::error::{ExperimentError, Result};
use crate::solve::run_solve;
use crate::stability::run_stability;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// What every artifact embeds to trace it back to its inputs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub version: &'static str,
    pub kind: ExperimentKind,
    pub seed: u64,
}

impl Provenance {
    pub fn of(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            config_hash: cfg.hash()?,
            version: VERSION,
            kind: cfg.kind,
            seed: cfg.seed,
        })
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| ExperimentError::Write {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    write(dir, name, &text)
}

/// Runs the configured experiment and writes its artifacts to `dir`.
///
/// Returns the written paths. Breakdowns and suite violations are reported as
/// errors after the artifacts are on disk.
pub fn execute(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let prov = Provenance::of(cfg)?;
    std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    let failure = match cfg.kind {
        ExperimentKind::Solve => {
            let out = run_solve(cfg)?;
            let header = json!({ "config_hash": prov.config_hash, "version": prov.version });
            written.push(write(dir, "trajectory.csv", &out.trajectory.to_csv(&header))?);
            written.push(write_json(dir, "metadata.json", &json!({ "provenance": prov, "solve": out.summary }))?);
            out.trajectory.breakdown.map(|b| ExperimentError::Breakdown {
                time: b.time,
                gap: b.gap,
            })
        }
        ExperimentKind::Convergence => {
            let table = run_convergence(cfg)?;
            let header = json!({ "config_hash": prov.config_hash, "version": prov.version, "reference": table.reference });
            written.push(write(dir, "convergence.csv", &table.to_csv(&header))?);
            written.push(write_json(dir, "convergence.json", &json!({ "provenance": prov, "table": table }))?);
            None
        }
        ExperimentKind::Stability => {
            let rep = run_stability(cfg)?;
            written.push(write_json(dir, "stability.json", &json!({ "provenance": prov, "report": rep }))?);
            (!rep.passed()).then(|| ExperimentError::SuiteViolation(rep.violations.join("; ")))
        }
        ExperimentKind::Curvature => {
            let rep = run_curvature_suite(cfg)?;
            written.push(write_json(dir, "curvature.json", &json!({ "provenance": prov, "report": rep }))?);
            (!rep.passed()).then(|| ExperimentError::SuiteViolation(rep.violations.join("; ")))
        }
        ExperimentKind::Diagnostics => {
            let rep = run_diagnostics(cfg)?;
            written.push(write_json(dir, "diagnostics.json", &json!({ "provenance": prov, "report": rep }))?);
            (!rep.passed()).then(|| ExperimentError::SuiteViolation(rep.violations.join("; ")))
        }
    };
    match failure {
        Some(e) => Err(e),
        None => Ok(written),
    }
}
