use dlra_core::integrator::{energy_report, solve, EnergyReport, Problem, Trajectory, BREAKDOWN_REL_GAP};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::Result;

pub struct SolveOutcome {
    pub problem: Problem<f64>,
    pub trajectory: Trajectory<f64>,
    pub summary: SolveSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub scheme: String,
    pub tau: f64,
    pub t_end: f64,
    pub steps: usize,
    pub final_time: f64,
    pub final_gap: f64,
    /// Breakdown threshold at the final state.
    pub final_threshold: f64,
    pub breakdown_time: Option<f64>,
    pub energy: EnergyReport,
}

/// Integrates the configured problem. Breakdown is part of the outcome, not
/// an error, so the caller can still write the trajectory.
pub fn run_solve(cfg: &ExperimentConfig) -> Result<SolveOutcome> {
    cfg.validate()?;
    let spec = cfg.problem_spec()?;
    let problem = spec.build::<f64>()?;
    let trajectory = solve(&problem, cfg.scheme, cfg.tau, spec.t_end)?;
    let energy = energy_report(&trajectory, &problem)?;
    let last = trajectory.last();
    let summary = SolveSummary {
        scheme: cfg.scheme.to_string(),
        tau: cfg.tau,
        t_end: spec.t_end,
        steps: trajectory.states.len() - 1,
        final_time: last.time,
        final_gap: last.gap,
        final_threshold: BREAKDOWN_REL_GAP * last.energy_l2.sqrt(),
        breakdown_time: trajectory.breakdown.map(|b| b.time),
        energy,
    };
    Ok(SolveOutcome {
        problem,
        trajectory,
        summary,
    })
}
