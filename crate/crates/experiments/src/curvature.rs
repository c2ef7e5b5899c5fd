use dlra_core::linalg::svd;
use dlra_core::random::{random_orthonormal, random_point, random_tensor, random_tt, random_vec, seeded};
use dlra_core::tangent::{check_aligned_bases, curvature_report, polar_align, CurvatureReport};
use dlra_core::{ManifoldPoint, Matrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::Result;

/// Relative slack on the curvature bounds and absolute slack on identities.
pub const BOUND_SLACK: f64 = 1e-10;
pub const IDENTITY_TOL: f64 = 1e-10;
/// `σ` is multiplied by this in the negative control.
pub const CONTROL_INFLATION: f64 = 1e3;
/// Perturbation sizes, relative to the boundary gap, for the second-order
/// normal defect.
pub const DEFECT_LEVELS: [f64; 3] = [1e-1, 1e-2, 1e-3];
/// Consecutive `defect / ε²` values may differ by at most this factor.
pub const DEFECT_LEVEL_FACTOR: f64 = 4.0;
const DEFECT_INSTANCES: usize = 10;
const ROTATION_ANGLES: usize = 17;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PairBatch {
    pub instances: usize,
    pub tt_violations: usize,
    pub tucker_violations: usize,
    /// Largest `‖P_X − P_Y‖ / (4d‖X−Y‖/σ)`.
    pub max_projector_ratio: f64,
    /// Largest `‖(I−P_X)(X−Y)‖ / (√(d−1)‖X−Y‖²/σ)`.
    pub max_normal_ratio: f64,
    /// Pairs `X = Y` with a nonzero reported difference.
    pub degenerate_nonzero: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignedBatch {
    pub draws: usize,
    pub basis_violations: usize,
    pub coefficient_violations: usize,
    /// Largest `‖U−V‖ / (√2‖P_U−P_V‖)` over draws with distinct spans.
    pub max_basis_ratio: f64,
    /// Largest deviation of the rank-one rotation family from its closed forms.
    pub rotation_max_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TruncationBatch {
    pub instances: usize,
    pub interfaces: usize,
    /// Largest `|‖X − truncate(X, μ)‖ − σ^μ_{k_μ}|`.
    pub max_truncation_error: f64,
    /// Largest `|gap − min_μ ‖X − truncate(X, μ)‖|`.
    pub max_gap_error: f64,
    /// Largest deviation between spectra through the core and of the full tensor.
    pub max_spectrum_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DefectOrder {
    pub instances: usize,
    /// Largest ratio between consecutive `defect / ε²` values, either way.
    pub max_level_ratio: f64,
    pub violations: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NegativeControl {
    pub inflation: f64,
    pub violations: usize,
    pub fired: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSuiteReport {
    pub seed: u64,
    /// Matrix pairs, `σ` exact: the bounds are guaranteed.
    pub matrix: PairBatch,
    /// Order-3 pairs with the gap as `σ`: reported only.
    pub tensor_heuristic: PairBatch,
    pub aligned: AlignedBatch,
    pub truncation: TruncationBatch,
    pub defect_order: DefectOrder,
    pub negative_control: NegativeControl,
    pub violations: Vec<String>,
}

impl CurvatureSuiteReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn instance_seed(seed: u64, batch: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (batch << 48) ^ i as u64
}

/// Retraction of `X + ε‖X‖ Z/‖Z‖` for a random direction `Z`.
fn nearby(p: &ManifoldPoint<f64>, eps: f64, seed: u64) -> Result<ManifoldPoint<f64>> {
    let z = random_tensor::<f64, _>(&p.dims(), &mut seeded(seed))?;
    let z = z.scaled(eps * p.norm() / z.norm());
    Ok(ManifoldPoint::retract(&p.to_dense().add(&z)?, &p.ranks())?.0)
}

fn pair_reports(
    count: usize,
    seed: u64,
    batch: u64,
    shape: impl Fn(usize) -> (Vec<usize>, Vec<usize>, Option<Vec<usize>>) + Sync,
) -> Result<Vec<(CurvatureReport, CurvatureReport)>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let s = instance_seed(seed, batch, i);
            let (dims, outer, tt) = shape(i);
            let x = random_point::<f64, _>(&dims, &outer, tt.as_deref(), &mut seeded(s))?;
            let eps = DEFECT_LEVELS[i % DEFECT_LEVELS.len()];
            let y = nearby(&x, eps, s ^ 1)?;
            Ok((curvature_report(&x, &y)?, curvature_report(&x, &x)?))
        })
        .collect()
}

fn summarize(pairs: &[(CurvatureReport, CurvatureReport)]) -> PairBatch {
    let mut b = PairBatch {
        instances: pairs.len(),
        ..PairBatch::default()
    };
    for (rep, same) in pairs {
        b.tt_violations += usize::from(!rep.tt_bounds_hold(BOUND_SLACK));
        b.tucker_violations += usize::from(!rep.tucker_tt_bounds_hold(BOUND_SLACK));
        if rep.tt_projector_bound > 0.0 {
            b.max_projector_ratio = b.max_projector_ratio.max(rep.projector_difference_norm / rep.tt_projector_bound);
        }
        if rep.tt_normal_bound > 0.0 {
            b.max_normal_ratio = b.max_normal_ratio.max(rep.normal_defect / rep.tt_normal_bound);
        }
        let nonzero = same.distance != 0.0 || same.projector_difference_norm != 0.0 || same.normal_defect != 0.0;
        b.degenerate_nonzero += usize::from(nonzero);
    }
    b
}

fn matrix_shape(i: usize) -> (Vec<usize>, Vec<usize>, Option<Vec<usize>>) {
    let (m, n) = (4 + i % 4, 4 + (i / 4) % 3);
    let r = 1 + i % 3;
    (vec![m, n], vec![r, r], None)
}

fn tensor_shape(i: usize) -> (Vec<usize>, Vec<usize>, Option<Vec<usize>>) {
    match i % 3 {
        0 => (vec![4, 4, 4], vec![2, 2, 2], Some(vec![2, 2])),
        1 => (vec![4, 5, 4], vec![2, 3, 2], Some(vec![2, 2])),
        _ => (vec![3, 4, 3], vec![2, 2, 2], None),
    }
}

fn aligned_batch(draws: usize, seed: u64) -> Result<AlignedBatch> {
    let reports: Vec<_> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeded(instance_seed(seed, 3, i));
            let (n, r) = (4 + i % 5, 1 + i % 3);
            let u = random_orthonormal::<f64, _>(n, r, &mut rng);
            let v = random_orthonormal::<f64, _>(n, r, &mut rng);
            let x = random_vec::<f64, _>(r, &mut rng);
            let y = random_vec::<f64, _>(r, &mut rng);
            Ok(check_aligned_bases(&polar_align(&u, &v)?, &v, &x, &y)?)
        })
        .collect::<Result<_>>()?;
    let mut b = AlignedBatch {
        draws,
        ..AlignedBatch::default()
    };
    for rep in &reports {
        b.basis_violations += usize::from(!rep.basis_holds);
        b.coefficient_violations += usize::from(!rep.coefficient_holds);
        if rep.basis_bound > 0.0 {
            b.max_basis_ratio = b.max_basis_ratio.max(rep.basis_difference / rep.basis_bound);
        }
    }
    for k in 0..ROTATION_ANGLES {
        let theta = std::f64::consts::FRAC_PI_2 * k as f64 / (ROTATION_ANGLES - 1) as f64;
        let u = Matrix::from_col_major(3, 1, vec![1.0, 0.0, 0.0])?;
        let v = Matrix::from_col_major(3, 1, vec![theta.cos(), theta.sin(), 0.0])?;
        let rep = check_aligned_bases(&polar_align(&u, &v)?, &v, &[1.0], &[1.0])?;
        let basis = (rep.basis_difference - 2.0 * (theta / 2.0).sin().abs()).abs();
        let projector = (rep.basis_bound / std::f64::consts::SQRT_2 - theta.sin().abs()).abs();
        b.rotation_max_error = b.rotation_max_error.max(basis).max(projector);
    }
    Ok(b)
}

fn tt_shape(i: usize) -> (Vec<usize>, Vec<usize>) {
    match i % 3 {
        0 => (vec![3, 4, 3], vec![3, 2]),
        1 => (vec![4, 3, 4], vec![2, 3]),
        _ => (vec![3, 3, 3, 3], vec![2, 3, 2]),
    }
}

fn point_shape(i: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    match i % 2 {
        0 => (vec![5, 4, 5], vec![2, 3, 2], vec![2, 2]),
        _ => (vec![4, 4, 4, 4], vec![2, 3, 3, 2], vec![2, 3, 2]),
    }
}

/// `(truncation error, gap error, interfaces, spectrum error)` of one instance.
fn truncation_instance(seed: u64, i: usize) -> Result<(f64, f64, usize, f64)> {
    let mut rng = seeded(instance_seed(seed, 4, i));
    let (dims, ranks) = tt_shape(i);
    let t = random_tt::<f64, _>(&dims, &ranks, &mut rng)?;
    let x = t.to_dense();
    let spec = t.interface_spectrum().tt;
    let mut trunc_err: f64 = 0.0;
    let mut best = f64::INFINITY;
    for (mu, s) in spec.iter().enumerate() {
        let dist = t.truncate_interface(mu)?.to_dense().sub(&x)?.norm();
        trunc_err = trunc_err.max((dist - s.last().copied().unwrap_or(0.0)).abs());
        best = best.min(dist);
    }
    let gap_err = (t.boundary_gap()? - best).abs();

    let (dims, outer, tt) = point_shape(i);
    let p = random_point::<f64, _>(&dims, &outer, Some(&tt), &mut rng)?;
    let dense = p.to_dense();
    let through_core = p.spectrum();
    let mut spec_err: f64 = 0.0;
    for (mu, vals) in through_core.tucker.iter().enumerate() {
        let oracle = svd(&dense.unfold(mu)?)?.singular_values;
        for (a, b) in vals.iter().zip(&oracle) {
            spec_err = spec_err.max((a - b).abs());
        }
    }
    for (m, vals) in through_core.tt.iter().enumerate() {
        let split: Vec<usize> = (0..=m).collect();
        let oracle = svd(&dense.matricize(&split)?)?.singular_values;
        for (a, b) in vals.iter().zip(&oracle) {
            spec_err = spec_err.max((a - b).abs());
        }
    }
    Ok((trunc_err, gap_err, spec.len(), spec_err))
}

fn defect_order(seed: u64) -> Result<DefectOrder> {
    let ratios: Vec<f64> = (0..DEFECT_INSTANCES)
        .into_par_iter()
        .map(|i| {
            let s = instance_seed(seed, 5, i);
            let (dims, outer, tt) = tensor_shape(i);
            let x = random_point::<f64, _>(&dims, &outer, tt.as_deref(), &mut seeded(s))?;
            // Step sizes relative to the gap, the scale of the curvature.
            let rel = x.boundary_gap() / x.norm();
            let mut scaled = Vec::with_capacity(DEFECT_LEVELS.len());
            for eps in DEFECT_LEVELS {
                // Same direction at every level.
                let y = nearby(&x, eps * rel, s ^ 1)?;
                scaled.push(curvature_report(&x, &y)?.normal_defect / (eps * eps));
            }
            Ok(scaled
                .windows(2)
                .map(|w| (w[1] / w[0]).max(w[0] / w[1]))
                .fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    Ok(DefectOrder {
        instances: ratios.len(),
        max_level_ratio: ratios.iter().copied().fold(0.0, f64::max),
        violations: ratios.iter().filter(|&&r| !(r <= DEFECT_LEVEL_FACTOR)).count(),
    })
}

/// Seeded batches of the curvature bounds, the aligned-basis inequalities,
/// interface truncations and spectra.
pub fn run_curvature_suite(cfg: &ExperimentConfig) -> Result<CurvatureSuiteReport> {
    cfg.validate()?;
    let settings = &cfg.curvature;
    let seed = cfg.seed;

    let matrix_pairs = pair_reports(settings.matrix_pairs, seed, 1, matrix_shape)?;
    let matrix = summarize(&matrix_pairs);
    let tensor_heuristic = summarize(&pair_reports(settings.tensor_pairs, seed, 2, tensor_shape)?);
    let aligned = aligned_batch(settings.aligned_draws, seed)?;

    let per_instance: Vec<_> = (0..settings.tt_instances)
        .into_par_iter()
        .map(|i| truncation_instance(seed, i))
        .collect::<Result<_>>()?;
    let mut truncation = TruncationBatch {
        instances: per_instance.len(),
        ..TruncationBatch::default()
    };
    for &(t, g, k, s) in &per_instance {
        truncation.max_truncation_error = truncation.max_truncation_error.max(t);
        truncation.max_gap_error = truncation.max_gap_error.max(g);
        truncation.interfaces += k;
        truncation.max_spectrum_error = truncation.max_spectrum_error.max(s);
    }
    let defect_order = defect_order(seed)?;

    // Bounds with an inflated σ must fail somewhere, or the batch is vacuous.
    let control_violations = matrix_pairs
        .iter()
        .filter(|(rep, _)| {
            let mut weak = rep.clone();
            weak.tt_projector_bound /= CONTROL_INFLATION;
            weak.tt_normal_bound /= CONTROL_INFLATION;
            !weak.tt_bounds_hold(BOUND_SLACK)
        })
        .count();
    let negative_control = NegativeControl {
        inflation: CONTROL_INFLATION,
        violations: control_violations,
        fired: control_violations > 0,
    };

    let mut violations = Vec::new();
    let mut require = |ok: bool, msg: String| {
        if !ok {
            violations.push(msg);
        }
    };
    require(
        matrix.tt_violations == 0 && matrix.tucker_violations == 0,
        format!(
            "matrix curvature bounds violated on {} (TT) and {} (Tucker) pairs",
            matrix.tt_violations, matrix.tucker_violations
        ),
    );
    require(
        matrix.degenerate_nonzero + tensor_heuristic.degenerate_nonzero == 0,
        "identical pairs with nonzero difference".into(),
    );
    require(
        aligned.basis_violations == 0 && aligned.coefficient_violations == 0,
        format!(
            "aligned-basis inequalities violated on {} + {} draws",
            aligned.basis_violations, aligned.coefficient_violations
        ),
    );
    require(
        aligned.rotation_max_error <= IDENTITY_TOL,
        format!("rotation family deviates by {:e}", aligned.rotation_max_error),
    );
    require(
        truncation.max_truncation_error <= IDENTITY_TOL && truncation.max_gap_error <= IDENTITY_TOL,
        format!(
            "interface truncation deviates by {:e} (gap {:e})",
            truncation.max_truncation_error, truncation.max_gap_error
        ),
    );
    require(
        truncation.max_spectrum_error <= IDENTITY_TOL,
        format!("core spectra deviate by {:e}", truncation.max_spectrum_error),
    );
    require(
        defect_order.violations == 0,
        format!("normal defect not second order on {} instances", defect_order.violations),
    );
    require(
        settings.matrix_pairs == 0 || negative_control.fired,
        "negative control did not fire".into(),
    );

    Ok(CurvatureSuiteReport {
        seed,
        matrix,
        tensor_heuristic,
        aligned,
        truncation,
        defect_order,
        negative_control,
        violations,
    })
}
