//! Experiment harness around `dlra-core`: mesh convergence, perturbation
//! stability, geometry suites, problem diagnostics and plain solves.
//!
//! Each run is described by an [`ExperimentConfig`] and writes CSV/JSON
//! artifacts that embed the config hash and the crate version.

pub mod config;
pub mod convergence;
pub mod curvature;
pub mod diagnose;
pub mod error;
pub mod output;
pub mod solve;
pub mod stability;

pub use config::{ExperimentConfig, ExperimentKind, Perturbation, PerturbationTarget, ProblemSource};
pub use convergence::{run_convergence, ConvergenceRow, ConvergenceTable};
pub use curvature::{run_curvature_suite, CurvatureSuiteReport};
pub use diagnose::{run_diagnostics, DiagnosticsReport};
pub use error::{ExperimentError, Result};
pub use output::{execute, Provenance};
pub use solve::{run_solve, SolveOutcome, SolveSummary};
pub use stability::{run_stability, StabilityReport};
