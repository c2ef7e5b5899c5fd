use std::fs;

use dlra_core::fem::{SeparableSource, SourceTerm};
use dlra_core::integrator::{dense_implicit_euler, InitialTerm, ProblemSpec, Scheme};
use dlra_core::Profile;
use dlra_experiments::{
    execute, run_convergence, run_curvature_suite, run_diagnostics, run_solve, run_stability, ExperimentConfig,
    ExperimentError, ExperimentKind, PerturbationTarget,
};

fn sine(k: f64) -> Profile {
    Profile::Sine { k }
}

fn bump() -> Profile {
    Profile::Polynomial {
        coeffs: vec![0.0, 1.0, -1.0],
    }
}

fn identity(d: usize) -> Vec<Vec<f64>> {
    (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn coupled(d: usize) -> Vec<Vec<f64>> {
    (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.25 }).collect()).collect()
}

/// Rank-one bump on the unit square with coupled diffusion.
fn bump2d(cells: usize) -> ProblemSpec {
    ProblemSpec {
        cells: vec![cells, cells],
        b0: coupled(2),
        b1: None,
        source: SeparableSource::default(),
        initial: vec![InitialTerm {
            coeff: 1.0,
            profiles: vec![bump(), bump()],
        }],
        t_end: 0.05,
        outer_ranks: vec![1, 1],
        tt_ranks: None,
    }
}

/// Rank-(3,3,3) heat flow whose three terms decay at the same rate.
fn heat3d(cells: usize, t_end: f64) -> ProblemSpec {
    let term = |c: f64, k: [f64; 3]| InitialTerm {
        coeff: c,
        profiles: k.iter().map(|&k| sine(k)).collect(),
    };
    ProblemSpec {
        cells: vec![cells; 3],
        b0: identity(3),
        b1: None,
        source: SeparableSource::default(),
        initial: vec![term(1.0, [1.0, 2.0, 3.0]), term(0.5, [2.0, 3.0, 1.0]), term(0.25, [3.0, 1.0, 2.0])],
        t_end,
        outer_ranks: vec![3, 3, 3],
        tt_ranks: Some(vec![3, 3]),
    }
}

fn collapse() -> ProblemSpec {
    ProblemSpec {
        cells: vec![16, 16],
        b0: identity(2),
        b1: None,
        source: SeparableSource::default(),
        initial: vec![
            InitialTerm {
                coeff: 1.0,
                profiles: vec![sine(1.0), sine(1.0)],
            },
            InitialTerm {
                coeff: 1e-3,
                profiles: vec![sine(3.0), sine(3.0)],
            },
        ],
        t_end: 1.0,
        outer_ranks: vec![2, 2],
        tt_ranks: None,
    }
}

fn convergence_cfg(spec: ProblemSpec, ladder: Vec<usize>, reference: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(ExperimentKind::Convergence).with_problem(spec);
    cfg.tau = 0.01;
    cfg.mesh_ladder = ladder;
    cfg.reference_cells = Some(reference);
    cfg
}

#[test]
fn identical_mesh_gives_zero_error() {
    let table = run_convergence(&convergence_cfg(bump2d(8), vec![8], 8)).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert!(table.rows[0].error_l2 < 1e-14, "{table:?}");
    assert!(table.rows[0].error_v < 1e-12);
    assert_eq!(table.rows[0].ratio, None);
    assert_eq!(table.steps, 5);
}

#[test]
fn convergence_ladder_decreases() {
    let table = run_convergence(&convergence_cfg(bump2d(8), vec![4, 8, 16], 32)).unwrap();
    assert!(table.strictly_decreasing(), "{table:?}");
    assert!(table.max_ratio().unwrap() <= 0.7, "{table:?}");
    let h: Vec<f64> = table.rows.iter().map(|r| r.h).collect();
    assert!(h.windows(2).all(|w| w[1] < w[0]));
    assert_eq!(table.reference_cells, 32);
    let csv = table.to_csv(&serde_json::json!({"x": 1}));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], r#"# {"x":1}"#);
    assert_eq!(lines[1], "n_cells,h,error_l2,ratio,error_v");
    assert_eq!(lines.len(), 5);
    assert!(lines[2].starts_with("4,2.5e-1,") && lines[2].contains(",,"));
}

#[test]
fn prolongation_matches_dense_interpolation() {
    // A mesh-independent exact state: a single nodal sine is an eigenvector
    // of the P1 mass and stiffness matrices, so only the temporal decay rate
    // differs between meshes. With t_end = 0 the only error is interpolation.
    let mut spec = bump2d(4);
    spec.initial = vec![InitialTerm {
        coeff: 1.0,
        profiles: vec![sine(1.0), sine(1.0)],
    }];
    spec.t_end = 0.0;
    let table = run_convergence(&convergence_cfg(spec, vec![4, 8], 16)).unwrap();
    // Independent oracle on the 16-cell mesh: with a the fine interpolant of
    // sin(πx) and b the coarse interpolant sampled at fine nodes,
    // ‖a⊗a − b⊗b‖²_{M⊗M} = (aᵀMa)² − 2(aᵀMb)² + (bᵀMb)².
    let oracle = |n: usize| -> f64 {
        let nf = 16usize;
        let hf = 1.0 / nf as f64;
        let s = |x: f64| (std::f64::consts::PI * x).sin();
        let coarse = |x: f64| -> f64 {
            let h = 1.0 / n as f64;
            let j = ((x / h).floor() as usize).min(n - 1);
            let (x0, x1) = (j as f64 * h, (j + 1) as f64 * h);
            s(x0) + (s(x1) - s(x0)) * (x - x0) / h
        };
        let m = |i: usize, j: usize| -> f64 {
            match i.abs_diff(j) {
                0 => 4.0 * hf / 6.0,
                1 => hf / 6.0,
                _ => 0.0,
            }
        };
        let a: Vec<f64> = (1..nf).map(|i| s(i as f64 * hf)).collect();
        let b: Vec<f64> = (1..nf).map(|i| coarse(i as f64 * hf)).collect();
        let form = |u: &[f64], v: &[f64]| -> f64 {
            let mut acc = 0.0;
            for i in 0..nf - 1 {
                for j in 0..nf - 1 {
                    acc += u[i] * m(i, j) * v[j];
                }
            }
            acc
        };
        let (aa, ab, bb) = (form(&a, &a), form(&a, &b), form(&b, &b));
        (aa * aa - 2.0 * ab * ab + bb * bb).max(0.0).sqrt()
    };
    for row in &table.rows {
        let want = oracle(row.n_cells);
        assert!((row.error_l2 - want).abs() <= 1e-8 * want, "{} vs {want}", row.error_l2);
    }
}

#[test]
fn reference_breakdown_aborts() {
    let cfg = convergence_cfg(collapse(), vec![8], 16);
    let e = run_convergence(&cfg).unwrap_err();
    assert!(matches!(e, ExperimentError::Breakdown { .. }), "{e}");
    assert_eq!(e.exit_code(), 3);
}

fn stability_cfg(target: PerturbationTarget, deltas: Vec<f64>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(ExperimentKind::Stability).with_problem(heat3d(8, 0.05));
    cfg.tau = 0.005;
    cfg.perturbations = deltas;
    cfg.perturbation.target = target;
    cfg
}

#[test]
fn stability_initial_perturbation() {
    let rep = run_stability(&stability_cfg(PerturbationTarget::Initial, vec![0.0, 1e-2, 5e-3])).unwrap();
    assert!(rep.passed(), "{:?}", rep.violations);
    assert!(rep.determinism_difference.unwrap() <= 1e-12);
    assert_eq!(rep.linearity.len(), 1);
    let lin = &rep.linearity[0];
    assert!((1.6..=2.4).contains(&lin.difference_ratio), "{lin:?}");
    for run in rep.runs.iter().filter(|r| r.delta > 0.0) {
        assert_eq!(run.times.len(), 11);
        assert!(run.fitted_rate.unwrap().is_finite());
        // Heat flow contracts, so the envelope starts at the initial ratio 1.
        assert!(run.envelope_constant.unwrap() <= 1.0 + 1e-9, "{run:?}");
        assert!(run.ratio.iter().all(|r| r.unwrap() <= 1.0 + 1e-9));
        assert!(run.data_term.windows(2).all(|w| w[0] == w[1]), "source is unperturbed");
    }
}

#[test]
fn stability_source_perturbation() {
    let rep = run_stability(&stability_cfg(PerturbationTarget::Source, vec![1e-2, 5e-3])).unwrap();
    assert!(rep.passed(), "{:?}", rep.violations);
    assert!(rep.determinism_difference.is_none());
    for run in &rep.runs {
        assert!(run.difference_sq[0] < 1e-26);
        assert_eq!(run.ratio[0], None, "no data difference at t = 0");
        assert!(run.data_term.windows(2).all(|w| w[1] > w[0]));
        assert!(run.envelope_constant.unwrap().is_finite());
    }
}

#[test]
fn curvature_suite_small_batches() {
    let mut cfg = ExperimentConfig::new(ExperimentKind::Curvature);
    cfg.seed = 11;
    cfg.curvature.matrix_pairs = 30;
    cfg.curvature.aligned_draws = 60;
    cfg.curvature.tt_instances = 12;
    cfg.curvature.tensor_pairs = 6;
    let rep = run_curvature_suite(&cfg).unwrap();
    assert!(rep.passed(), "{:?}", rep.violations);
    assert_eq!(rep.matrix.instances, 30);
    assert_eq!(rep.matrix.degenerate_nonzero, 0);
    assert!(rep.negative_control.fired);
    assert!(rep.truncation.interfaces >= 24);
    // Same seed, same report.
    assert_eq!(rep, run_curvature_suite(&cfg).unwrap());
    cfg.seed = 12;
    assert_ne!(rep.matrix, run_curvature_suite(&cfg).unwrap().matrix);
}

#[test]
fn diagnostics_report() {
    let mut cfg = ExperimentConfig::new(ExperimentKind::Diagnostics).with_problem(heat3d(8, 0.1));
    cfg.seed = 3;
    let rep = run_diagnostics(&cfg).unwrap();
    assert!(rep.passed(), "{:?}", rep.violations);
    assert_eq!(rep.dims, vec![7, 7, 7]);
    assert_eq!(rep.ambient_dim, 343);
    // Tucker (3,3,3) with a full TT core: 27 + 3·3·(7−3) coordinates.
    assert_eq!(rep.tangent_dim, 27 + 3 * 12);
    assert!(rep.diagonal_tangency_residual <= 1e-10);
    assert!(rep.cross_control_residual.unwrap() >= 1e-2);
    assert!((rep.spd_margin - 1.0).abs() < 1e-12);
    assert_eq!(rep.lipschitz, 0.0);
    assert_eq!(rep.mixed_derivatives.as_ref().unwrap().pairs.len(), 3);
    assert!((rep.breakdown_threshold - 1e-8 * rep.initial_norm).abs() < 1e-20);

    // Full rank: the normal space is trivial and the control does not apply.
    let mut full = bump2d(4);
    full.outer_ranks = vec![3, 3];
    full.initial = (1..=3)
        .map(|k| InitialTerm {
            coeff: 1.0 / k as f64,
            profiles: vec![sine(k as f64), sine(k as f64)],
        })
        .collect();
    let rep = run_diagnostics(&ExperimentConfig::new(ExperimentKind::Diagnostics).with_problem(full)).unwrap();
    assert_eq!(rep.tangent_dim, rep.ambient_dim);
    assert_eq!(rep.cross_control_residual, None);
}

#[test]
fn solve_heat_flow_dissipates() {
    let mut cfg = ExperimentConfig::new(ExperimentKind::Solve).with_problem(heat3d(8, 0.02));
    cfg.tau = 0.001;
    let out = run_solve(&cfg).unwrap();
    assert_eq!(out.summary.steps, 20);
    assert_eq!(out.summary.breakdown_time, None);
    let l2: Vec<f64> = out.trajectory.states.iter().map(|s| s.energy_l2).collect();
    assert!(l2.windows(2).all(|w| w[1] <= w[0]));
    assert!(out.summary.energy.balance_holds);

    // The three terms are discrete eigenfunctions, so the low-rank solve is
    // exact and agrees with unconstrained implicit Euler.
    let dense = dense_implicit_euler(&out.problem, 0.001, 0.02).unwrap();
    let (_, last) = dense.last().unwrap();
    let err = out.trajectory.last().point.to_dense().sub(last).unwrap().norm();
    assert!(err <= 1e-10 * last.norm(), "{err:e}");

    cfg.scheme = Scheme::ProjectorSplitting;
    let split = run_solve(&cfg).unwrap();
    let err = split.trajectory.last().point.to_dense().sub(last).unwrap().norm();
    assert!(err <= 1e-10 * last.norm(), "{err:e}");
}

#[test]
fn zero_horizon_gives_one_row() {
    let mut cfg = ExperimentConfig::new(ExperimentKind::Solve).with_problem(bump2d(8));
    cfg.t_end = Some(0.0);
    let dir = tempfile::tempdir().unwrap();
    execute(&cfg, dir.path()).unwrap();
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(2).unwrap().starts_with("0e0,"));
}

#[test]
fn collapse_writes_artifacts_then_reports_breakdown() {
    let mut cfg = ExperimentConfig::new(ExperimentKind::Solve).with_problem(collapse());
    cfg.tau = 0.01;
    let dir = tempfile::tempdir().unwrap();
    let e = execute(&cfg, dir.path()).unwrap_err();
    assert_eq!(e.exit_code(), 3);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("metadata.json")).unwrap()).unwrap();
    let solve = &meta["solve"];
    let t = solve["breakdown_time"].as_f64().unwrap();
    assert!(t > 0.0 && t < 1.0);
    assert!(solve["final_gap"].as_f64().unwrap() <= solve["final_threshold"].as_f64().unwrap());
    assert_eq!(meta["provenance"]["config_hash"], cfg.hash().unwrap());
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 1 + solve["steps"].as_u64().unwrap() as usize);
}

#[test]
fn artifacts_are_byte_identical() {
    let mut cfg = ExperimentConfig::new(ExperimentKind::Stability).with_problem(heat3d(6, 0.02));
    cfg.tau = 0.005;
    cfg.perturbations = vec![0.0, 1e-2, 5e-3];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let pa = execute(&cfg, a.path()).unwrap();
    let pb = execute(&cfg, b.path()).unwrap();
    assert_eq!(pa.len(), pb.len());
    for (x, y) in pa.iter().zip(&pb) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
}

#[test]
fn source_terms_flow_through() {
    let mut spec = bump2d(8);
    spec.source = SeparableSource {
        terms: vec![SourceTerm {
            time_coeffs: vec![1.0],
            profiles: vec![sine(1.0), sine(1.0)],
        }],
    };
    let mut cfg = ExperimentConfig::new(ExperimentKind::Solve).with_problem(spec);
    cfg.tau = 0.01;
    let out = run_solve(&cfg).unwrap();
    assert!(out.summary.energy.source_integral > 0.0);
    assert!(out.summary.energy.balance_holds);
}
