use std::path::{Path, PathBuf};

use dlra_core::fem::Profile;
use dlra_core::integrator::{ProblemSpec, Scheme};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{config_error, ExperimentError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Convergence,
    Stability,
    Curvature,
    Diagnostics,
    Solve,
}

/// Problem given inline or as a path, relative paths being resolved against
/// the directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSource {
    Path(PathBuf),
    Inline(Box<ProblemSpec>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationTarget {
    #[default]
    Initial,
    Source,
}

/// Direction `g₁(x₁) ⋯ g_d(x_d)` added with weight `δ` to the initial state or
/// (with the given time polynomial) to the source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    #[serde(default)]
    pub target: PerturbationTarget,
    /// `sin(2πx)` in every dimension when empty.
    #[serde(default)]
    pub profiles: Vec<Profile>,
    #[serde(default = "unit_poly")]
    pub time_coeffs: Vec<f64>,
}

fn unit_poly() -> Vec<f64> {
    vec![1.0]
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            target: PerturbationTarget::Initial,
            profiles: Vec::new(),
            time_coeffs: unit_poly(),
        }
    }
}

impl Perturbation {
    pub fn profiles_for(&self, d: usize) -> Result<Vec<Profile>> {
        if self.profiles.is_empty() {
            return Ok(vec![Profile::Sine { k: 2.0 }; d]);
        }
        if self.profiles.len() != d {
            return Err(config_error(format!(
                "perturbation has {} profiles for a {d}-dimensional problem",
                self.profiles.len()
            )));
        }
        Ok(self.profiles.clone())
    }
}

/// Sizes of the seeded geometry batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurvatureSettings {
    /// Matrix pairs checked against the exact-σ bounds.
    pub matrix_pairs: usize,
    /// Random aligned bases for the √2 inequalities.
    pub aligned_draws: usize,
    /// TT tensors for the interface truncation and spectrum checks.
    pub tt_instances: usize,
    /// Order-3 pairs checked against the gap-heuristic bounds (reported only).
    pub tensor_pairs: usize,
}

impl Default for CurvatureSettings {
    fn default() -> Self {
        Self {
            matrix_pairs: 200,
            aligned_draws: 500,
            tt_instances: 100,
            tensor_pairs: 50,
        }
    }
}

fn default_scheme() -> Scheme {
    Scheme::ProjectedEuler
}

fn default_tau() -> f64 {
    0.01
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub problem: Option<ProblemSource>,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Overrides the horizon of the problem.
    #[serde(default)]
    pub t_end: Option<f64>,
    /// Cell counts of the convergence ladder, strictly increasing.
    #[serde(default)]
    pub mesh_ladder: Vec<usize>,
    /// Cells of the convergence reference; twice the finest rung when absent.
    #[serde(default)]
    pub reference_cells: Option<usize>,
    /// Magnitudes `δ` of the stability runs.
    #[serde(default)]
    pub perturbations: Vec<f64>,
    #[serde(default)]
    pub perturbation: Perturbation,
    #[serde(default)]
    pub curvature: CurvatureSettings,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            problem: None,
            scheme: default_scheme(),
            tau: default_tau(),
            t_end: None,
            mesh_ladder: Vec::new(),
            reference_cells: None,
            perturbations: Vec::new(),
            perturbation: Perturbation::default(),
            curvature: CurvatureSettings::default(),
            seed: 0,
            output_dir: None,
        }
    }

    pub fn with_problem(mut self, spec: ProblemSpec) -> Self {
        self.problem = Some(ProblemSource::Inline(Box::new(spec)));
        self
    }

    /// Reads a config and inlines its problem file.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = read_json(path)?;
        if let Some(ProblemSource::Path(p)) = &cfg.problem {
            let full = match path.parent() {
                Some(dir) if p.is_relative() => dir.join(p),
                _ => p.clone(),
            };
            let spec: ProblemSpec = read_json(&full)?;
            cfg.problem = Some(ProblemSource::Inline(Box::new(spec)));
        }
        Ok(cfg)
    }

    /// The problem, with the configured horizon applied.
    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        let mut spec = match &self.problem {
            Some(ProblemSource::Inline(s)) => (**s).clone(),
            Some(ProblemSource::Path(p)) => read_json(p)?,
            None => return Err(config_error(format!("{:?} experiments need a problem", self.kind))),
        };
        if let Some(t) = self.t_end {
            spec.t_end = t;
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(config_error("tau must be positive"));
        }
        if let Some(t) = self.t_end {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(config_error("t_end must be finite and nonnegative"));
            }
        }
        if self.mesh_ladder.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_error("mesh ladder must be strictly increasing"));
        }
        if self.perturbations.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(config_error("perturbations must be finite and nonnegative"));
        }
        match self.kind {
            ExperimentKind::Curvature => {}
            ExperimentKind::Convergence => {
                self.problem_spec()?;
                let finest = *self
                    .mesh_ladder
                    .last()
                    .ok_or_else(|| config_error("convergence needs a mesh ladder"))?;
                let reference = self.reference_cells();
                if reference < finest {
                    return Err(config_error("reference mesh is coarser than the ladder"));
                }
                if let Some(&n) = self.mesh_ladder.iter().find(|&&n| n < 2 || reference % n != 0) {
                    return Err(config_error(format!(
                        "mesh with {n} cells is not nested in the {reference}-cell reference"
                    )));
                }
            }
            ExperimentKind::Stability => {
                self.problem_spec()?;
                if self.perturbations.is_empty() {
                    return Err(config_error("stability needs at least one perturbation"));
                }
            }
            ExperimentKind::Diagnostics | ExperimentKind::Solve => {
                self.problem_spec()?;
            }
        }
        Ok(())
    }

    pub fn reference_cells(&self) -> usize {
        self.reference_cells
            .unwrap_or_else(|| 2 * self.mesh_ladder.last().copied().unwrap_or(1))
    }

    /// SHA-256 of the canonical JSON form (problem inlined).
    pub fn hash(&self) -> Result<String> {
        let mut canonical = self.clone();
        if let Some(ProblemSource::Path(_)) = canonical.problem {
            canonical.problem = Some(ProblemSource::Inline(Box::new(self.problem_spec()?)));
        }
        // The output location does not influence any result.
        canonical.output_dir = None;
        let text = serde_json::to_string(&canonical).expect("config serializes");
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ExperimentError::Json {
        path: path.to_path_buf(),
        source,
    })
}
