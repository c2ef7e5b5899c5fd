use dlra_core::fem::{assemble_operator, check_a1_tangency, mixed_derivative_check, MixedDerivativeReport, Part};
use dlra_core::integrator::{TangentFrame, BREAKDOWN_REL_GAP};
use dlra_core::{Diffusion, Matrix};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::Result;

/// The diagonal part of the operator must be tangent up to this residual.
pub const TANGENCY_TOL: f64 = 1e-10;
/// The cross part, used as a control, must leave the tangent space by at least this.
pub const CONTROL_MIN_RESIDUAL: f64 = 1e-2;
const TANGENCY_SAMPLES: usize = 20;
/// Off-diagonal coupling of the control diffusion `I + c (ones − I)`.
const CONTROL_COUPLING: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub dims: Vec<usize>,
    pub outer_ranks: Vec<usize>,
    pub tt_ranks: Option<Vec<usize>>,
    pub tangent_dim: usize,
    pub ambient_dim: usize,
    pub initial_gap: f64,
    pub initial_norm: f64,
    pub breakdown_threshold: f64,
    /// Lower bound of `λ_min(B(t))` on the horizon.
    pub spd_margin: f64,
    /// `‖B₁‖₂`.
    pub lipschitz: f64,
    pub diagonal_tangency_residual: f64,
    /// `None` when the tangent space is the whole space and no control is possible.
    pub cross_control_residual: Option<f64>,
    /// Reported only: the gap stands in for the distance to the boundary.
    pub mixed_derivatives: Option<MixedDerivativeReport>,
    pub violations: Vec<String>,
}

impl DiagnosticsReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Static properties of the problem and its initial point.
pub fn run_diagnostics(cfg: &ExperimentConfig) -> Result<DiagnosticsReport> {
    cfg.validate()?;
    let spec = cfg.problem_spec()?;
    let problem = spec.build::<f64>()?;
    let p = problem.initial.orthonormalized()?;
    let d = p.order();
    let tangent_dim = TangentFrame::new(&p)?.dim();
    let ambient_dim: usize = p.dims().iter().product();

    let op = problem.operator(0.0)?;
    let diagonal_tangency_residual = check_a1_tangency(&p, &op, Part::Diagonal, TANGENCY_SAMPLES, cfg.seed)?;
    let cross_control_residual = if tangent_dim < ambient_dim && d > 1 {
        let coupled = Matrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { CONTROL_COUPLING });
        let control = assemble_operator(&Diffusion::constant(coupled)?, &problem.coords, 0.0)?;
        Some(check_a1_tangency(&p, &control, Part::Cross, TANGENCY_SAMPLES, cfg.seed)?)
    } else {
        None
    };
    let mixed_derivatives = if d > 1 {
        Some(mixed_derivative_check(&p, &problem.coords)?)
    } else {
        None
    };

    let mut violations = Vec::new();
    if !(diagonal_tangency_residual <= TANGENCY_TOL) {
        violations.push(format!("diagonal part leaves the tangent space: {diagonal_tangency_residual:e}"));
    }
    if let Some(r) = cross_control_residual {
        if !(r >= CONTROL_MIN_RESIDUAL) {
            violations.push(format!("cross-part control stayed tangent: {r:e}"));
        }
    }

    let norm = p.norm();
    Ok(DiagnosticsReport {
        dims: p.dims(),
        outer_ranks: p.outer_ranks(),
        tt_ranks: spec.tt_ranks.clone(),
        tangent_dim,
        ambient_dim,
        initial_gap: p.boundary_gap(),
        initial_norm: norm,
        breakdown_threshold: BREAKDOWN_REL_GAP * norm,
        spd_margin: problem.diffusion.spd_margin(),
        lipschitz: problem.diffusion.lipschitz()?,
        diagonal_tangency_residual,
        cross_control_residual,
        mixed_derivatives,
        violations,
    })
}
