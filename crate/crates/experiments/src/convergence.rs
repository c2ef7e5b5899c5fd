use dlra_core::fem::prolongation;
use dlra_core::integrator::{solve, Problem, ProblemSpec, Trajectory};
use dlra_core::{ManifoldPoint, Matrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{ExperimentError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n_cells: usize,
    pub h: f64,
    /// `‖u_h(T) − u_ref(T)‖_{L₂}` after prolongation to the reference mesh.
    pub error_l2: f64,
    /// Error over the error of the previous (coarser) row.
    pub ratio: Option<f64>,
    /// `(Σ_n τ_n ‖u_h(t_n) − u_ref(t_n)‖²_V)^{1/2}`.
    pub error_v: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub reference: String,
    pub reference_cells: usize,
    pub steps: usize,
}

impl ConvergenceTable {
    /// Errors strictly decrease down the ladder.
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error_l2 < w[0].error_l2)
    }

    /// Largest ratio between consecutive rows.
    pub fn max_ratio(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.ratio).reduce(f64::max)
    }

    pub fn to_csv(&self, metadata: &serde_json::Value) -> String {
        let mut out = format!("# {metadata}\n");
        out.push_str("n_cells,h,error_l2,ratio,error_v\n");
        for r in &self.rows {
            let ratio = r.ratio.map(|v| format!("{v:e}")).unwrap_or_default();
            out.push_str(&format!("{},{:e},{:e},{},{:e}\n", r.n_cells, r.h, r.error_l2, ratio, r.error_v));
        }
        out
    }
}

fn solve_on(spec: &ProblemSpec, n: usize, cfg: &ExperimentConfig) -> Result<(Problem<f64>, Trajectory<f64>)> {
    let problem = spec.with_cells(vec![n; spec.order()]).build::<f64>()?;
    let tr = solve(&problem, cfg.scheme, cfg.tau, spec.t_end)?;
    if let Some(b) = tr.breakdown {
        return Err(ExperimentError::Breakdown {
            time: b.time,
            gap: b.gap,
        });
    }
    Ok((problem, tr))
}

/// Per-mode map from coarse orthonormal coordinates to fine ones:
/// `L_fᵀ P L_c⁻ᵀ` with the exact P1 injection `P`.
fn transfer_maps(coarse: &Problem<f64>, fine: &Problem<f64>, nc: usize, nf: usize) -> Result<Vec<Matrix<f64>>> {
    let p = prolongation::<f64>(nc, nf)?;
    Ok((0..coarse.coords.order())
        .map(|mu| {
            fine.coords
                .to_ortho_matrix(mu)
                .matmul(&p.matmul(&coarse.coords.from_ortho_matrix(mu)))
        })
        .collect())
}

fn prolongate(p: &ManifoldPoint<f64>, maps: &[Matrix<f64>]) -> ManifoldPoint<f64> {
    let (core, factors) = p.clone().into_parts();
    let factors = factors.iter().zip(maps).map(|(u, m)| m.matmul(u)).collect();
    ManifoldPoint::new_unchecked(core, factors)
}

/// Terminal L₂ error and time-integrated V error of a rung against the
/// reference trajectory on the same time grid.
fn rung_errors(
    coarse: &Problem<f64>,
    tr: &Trajectory<f64>,
    fine: &Problem<f64>,
    reference: &Trajectory<f64>,
    nc: usize,
    nf: usize,
) -> Result<(f64, f64)> {
    let maps = transfer_maps(coarse, fine, nc, nf)?;
    let mut v_sq = 0.0;
    let mut terminal = 0.0;
    for (k, (a, b)) in tr.states.iter().zip(&reference.states).enumerate() {
        let diff = prolongate(&a.point, &maps).difference(&b.point)?;
        if k > 0 {
            let h = a.time - tr.states[k - 1].time;
            v_sq += h * fine.coords.point_v_norm_sq(&diff)?;
        }
        terminal = diff.norm();
    }
    Ok((terminal, v_sq.sqrt()))
}

/// Solves on every ladder mesh and on the reference mesh with the same ranks
/// and time grid, and tabulates the errors at the final time.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    cfg.validate()?;
    let spec = cfg.problem_spec()?;
    let nf = cfg.reference_cells();
    let (fine, reference) = solve_on(&spec, nf, cfg)?;

    let errors: Vec<(f64, f64)> = cfg
        .mesh_ladder
        .par_iter()
        .map(|&nc| {
            let (coarse, tr) = solve_on(&spec, nc, cfg)?;
            rung_errors(&coarse, &tr, &fine, &reference, nc, nf)
        })
        .collect::<Result<_>>()?;

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(errors.len());
    for (&n, &(error_l2, error_v)) in cfg.mesh_ladder.iter().zip(&errors) {
        let ratio = rows.last().map(|prev| error_l2 / prev.error_l2);
        rows.push(ConvergenceRow {
            n_cells: n,
            h: 1.0 / n as f64,
            error_l2,
            ratio,
            error_v,
        });
    }
    Ok(ConvergenceTable {
        rows,
        reference: format!(
            "low-rank solve with {nf} cells per dimension, outer ranks {:?}, TT ranks {:?}, same time grid",
            spec.outer_ranks, spec.tt_ranks
        ),
        reference_cells: nf,
        steps: reference.states.len() - 1,
    })
}
