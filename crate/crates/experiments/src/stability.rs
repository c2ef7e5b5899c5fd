use dlra_core::fem::{assemble_rhs, SeparableSource, SourceTerm};
use dlra_core::integrator::{retract_tucker, solve, Problem, Trajectory};
use dlra_core::{DenseTensor, ManifoldPoint, Matrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, PerturbationTarget};
use crate::error::{ExperimentError, Result};

/// Two runs with zero perturbation must agree to this accuracy.
pub const DETERMINISM_TOL: f64 = 1e-12;
/// Allowed relative departure from linear scaling in the perturbation size.
pub const LINEARITY_TOL: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRun {
    pub delta: f64,
    pub times: Vec<f64>,
    /// `‖u(t_n) − v(t_n)‖²`.
    pub difference_sq: Vec<f64>,
    /// `‖u₀ − v₀‖² + Σ_{k≤n} τ_k ‖f(t_k) − g(t_k)‖²`.
    pub data_term: Vec<f64>,
    /// `difference_sq / data_term`, `None` where the data term vanishes.
    pub ratio: Vec<Option<f64>>,
    /// Least-squares slope of `log ratio` against `t`.
    pub fitted_rate: Option<f64>,
    /// Smallest `c` with `ratio ≤ c · exp(max(rate, 0) t)` at every level.
    pub envelope_constant: Option<f64>,
    pub terminal_difference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearityCheck {
    pub delta_large: f64,
    pub delta_small: f64,
    pub difference_ratio: f64,
    pub delta_ratio: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub target: PerturbationTarget,
    pub runs: Vec<StabilityRun>,
    pub linearity: Vec<LinearityCheck>,
    /// Largest difference over the zero-perturbation runs.
    pub determinism_difference: Option<f64>,
    pub violations: Vec<String>,
}

impl StabilityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `u₀ + δ g₁ ⊗ ⋯ ⊗ g_d`, retracted to the ranks of `u₀`.
fn perturbed_initial(base: &Problem<f64>, profiles: &[dlra_core::Profile], delta: f64) -> Result<ManifoldPoint<f64>> {
    let p = &base.initial;
    let c = p.core_dense();
    let r = c.dims().to_vec();
    let joint: Vec<usize> = r.iter().map(|k| k + 1).collect();
    let mut core = DenseTensor::zeros(&joint)?;
    let mut idx = vec![0; r.len()];
    for (lin, &v) in c.data().iter().enumerate() {
        let mut rest = lin;
        for (i, &k) in idx.iter_mut().zip(&r) {
            *i = rest % k;
            rest /= k;
        }
        core.set(&idx, v);
    }
    core.set(&r, delta);
    let factors: Vec<Matrix<f64>> = p
        .factors()
        .iter()
        .enumerate()
        .map(|(mu, u)| {
            let g = base
                .coords
                .vector_to_ortho(mu, &base.coords.fem(mu).interpolate(&profiles[mu]));
            u.hcat(&Matrix::from_col_major(g.len(), 1, g).expect("column"))
        })
        .collect();
    Ok(retract_tucker(&core, &factors, &p.ranks())?.0)
}

fn checked_solve(problem: &Problem<f64>, cfg: &ExperimentConfig, t_end: f64) -> Result<Trajectory<f64>> {
    let tr = solve(problem, cfg.scheme, cfg.tau, t_end)?;
    match tr.breakdown {
        Some(b) => Err(ExperimentError::Breakdown {
            time: b.time,
            gap: b.gap,
        }),
        None => Ok(tr),
    }
}

/// Slope of the least-squares line through `(t, log y)` over positive `y`.
fn fit_rate(times: &[f64], ratio: &[Option<f64>]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(ratio)
        .filter_map(|(&t, r)| r.filter(|&v| v > 0.0).map(|v| (t, v.ln())))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if stt == 0.0 {
        return None;
    }
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    Some(sty / stt)
}

fn measure(
    base: &Problem<f64>,
    reference: &Trajectory<f64>,
    perturbed: &Problem<f64>,
    tr: &Trajectory<f64>,
    delta: f64,
) -> Result<StabilityRun> {
    let initial_sq = if perturbed.initial == base.initial {
        0.0
    } else {
        perturbed.initial.distance(&base.initial)?.powi(2)
    };
    let mut source_sq = 0.0;
    let mut run = StabilityRun {
        delta,
        times: Vec::with_capacity(tr.states.len()),
        difference_sq: Vec::with_capacity(tr.states.len()),
        data_term: Vec::with_capacity(tr.states.len()),
        ratio: Vec::with_capacity(tr.states.len()),
        fitted_rate: None,
        envelope_constant: None,
        terminal_difference: 0.0,
    };
    for (k, (a, b)) in reference.states.iter().zip(&tr.states).enumerate() {
        if k > 0 {
            let h = b.time - tr.states[k - 1].time;
            let fa = assemble_rhs(&base.source, &base.coords, b.time)?.to_dense();
            let fb = assemble_rhs(&perturbed.source, &perturbed.coords, b.time)?.to_dense();
            source_sq += h * fa.sub(&fb)?.norm().powi(2);
        }
        let diff = a.point.distance(&b.point)?;
        let data = initial_sq + source_sq;
        run.times.push(b.time);
        run.difference_sq.push(diff * diff);
        run.data_term.push(data);
        run.ratio.push((data > 0.0).then(|| diff * diff / data));
        run.terminal_difference = diff;
    }
    run.fitted_rate = fit_rate(&run.times, &run.ratio);
    if let Some(rate) = run.fitted_rate {
        let lam = rate.max(0.0);
        run.envelope_constant = run
            .times
            .iter()
            .zip(&run.ratio)
            .filter_map(|(&t, r)| r.map(|v| v * (-lam * t).exp()))
            .reduce(f64::max);
    }
    Ok(run)
}

/// Solves the problem with the configured data and with `δ`-perturbed data
/// for every `δ`, and compares the trajectories.
pub fn run_stability(cfg: &ExperimentConfig) -> Result<StabilityReport> {
    cfg.validate()?;
    let spec = cfg.problem_spec()?;
    let base = spec.build::<f64>()?;
    let profiles = cfg.perturbation.profiles_for(spec.order())?;
    let reference = checked_solve(&base, cfg, spec.t_end)?;

    let runs: Vec<StabilityRun> = cfg
        .perturbations
        .par_iter()
        .map(|&delta| {
            let perturbed = match cfg.perturbation.target {
                // Identical data: the run checks that solves are reproducible.
                _ if delta == 0.0 => base.clone(),
                PerturbationTarget::Initial => base.with_initial(perturbed_initial(&base, &profiles, delta)?)?,
                PerturbationTarget::Source => {
                    let mut source: SeparableSource = base.source.clone();
                    source.terms.push(SourceTerm {
                        time_coeffs: cfg.perturbation.time_coeffs.iter().map(|c| c * delta).collect(),
                        profiles: profiles.clone(),
                    });
                    base.with_source(source)?
                }
            };
            let tr = checked_solve(&perturbed, cfg, spec.t_end)?;
            measure(&base, &reference, &perturbed, &tr, delta)
        })
        .collect::<Result<_>>()?;

    let mut violations = Vec::new();
    let zero_runs: Vec<&StabilityRun> = runs.iter().filter(|r| r.delta == 0.0).collect();
    let determinism_difference = zero_runs
        .iter()
        .flat_map(|r| r.difference_sq.iter().map(|d| d.sqrt()))
        .reduce(f64::max);
    if let Some(d) = determinism_difference {
        if d > DETERMINISM_TOL {
            violations.push(format!("repeated solve differs by {d:e}"));
        }
    }

    let mut nonzero: Vec<&StabilityRun> = runs.iter().filter(|r| r.delta > 0.0).collect();
    nonzero.sort_by(|a, b| b.delta.total_cmp(&a.delta));
    let mut linearity = Vec::new();
    for w in nonzero.windows(2) {
        let (big, small) = (w[0], w[1]);
        if big.delta == small.delta {
            continue;
        }
        let delta_ratio = big.delta / small.delta;
        let difference_ratio = big.terminal_difference / small.terminal_difference;
        let rel = difference_ratio / delta_ratio;
        let holds = rel.is_finite() && (rel - 1.0).abs() <= LINEARITY_TOL;
        if !holds {
            violations.push(format!(
                "difference ratio {difference_ratio:.4} for perturbations {:e} and {:e}",
                big.delta, small.delta
            ));
        }
        linearity.push(LinearityCheck {
            delta_large: big.delta,
            delta_small: small.delta,
            difference_ratio,
            delta_ratio,
            holds,
        });
    }
    for r in &nonzero {
        if !r.fitted_rate.is_some_and(f64::is_finite) {
            violations.push(format!("no finite growth rate for perturbation {:e}", r.delta));
        }
    }

    Ok(StabilityReport {
        target: cfg.perturbation.target,
        runs,
        linearity,
        determinism_difference,
        violations,
    })
}
