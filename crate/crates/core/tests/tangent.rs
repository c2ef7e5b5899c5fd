use dlra_core::linalg::{gram, qr, Matrix};
use dlra_core::manifold::{Core, ManifoldPoint};
use dlra_core::random::{random_matrix, random_orthonormal, random_point, random_tensor, random_tt, seeded};
use dlra_core::tangent::{
    ambient_summands, brute_force_projector, check_aligned_bases, core_tangent_basis,
    core_tangent_project, curvature_report, polar_align, project_ambient, tangent_project,
    tangent_project_general, tangent_to_ambient, tt_manifold_dim, SigmaKind,
};
use dlra_core::{DenseTensor, Error};
use proptest::prelude::*;

struct Shape {
    dims: Vec<usize>,
    outer: Vec<usize>,
    tt: Option<Vec<usize>>,
}

fn shapes() -> Vec<Shape> {
    vec![
        Shape { dims: vec![4, 5], outer: vec![2, 2], tt: None },
        Shape { dims: vec![4, 5], outer: vec![2, 2], tt: Some(vec![2]) },
        Shape { dims: vec![4, 3, 4], outer: vec![2, 2, 2], tt: None },
        Shape { dims: vec![4, 4, 4], outer: vec![2, 3, 2], tt: Some(vec![2, 2]) },
        Shape { dims: vec![3, 4, 4, 3], outer: vec![2, 3, 3, 2], tt: Some(vec![2, 2, 2]) },
        Shape { dims: vec![4, 4, 4, 4], outer: vec![2, 3, 3, 2], tt: Some(vec![2, 3, 2]) },
    ]
}

fn point(shape: &Shape, seed: u64) -> ManifoldPoint<f64> {
    random_point(&shape.dims, &shape.outer, shape.tt.as_deref(), &mut seeded(seed)).unwrap()
}

/// Roundoff allowance growing with the conditioning `‖X‖ / gap` of the point.
fn tol(p: &ManifoldPoint<f64>) -> f64 {
    1e-13 * (p.norm() / p.boundary_gap()).max(10.0)
}

fn proj(p: &ManifoldPoint<f64>, z: &DenseTensor<f64>) -> DenseTensor<f64> {
    tangent_to_ambient(&tangent_project(p, z).unwrap()).unwrap()
}

#[test]
fn agrees_with_brute_force_oracle() {
    for (i, shape) in shapes().iter().enumerate() {
        for rep in 0..5 {
            let seed = 100 * i as u64 + rep;
            let p = point(shape, seed);
            let z = random_tensor::<f64, _>(&shape.dims, &mut seeded(seed + 7)).unwrap();
            let fast = proj(&p, &z);
            let oracle = brute_force_projector(&p, &z).unwrap();
            let err = fast.sub(&oracle).unwrap().norm();
            assert!(err <= 1e-10 * z.norm(), "shape {i}: {err:e}");
        }
    }
}

#[test]
fn tangent_dimension_matches_parameter_count() {
    let shape = Shape { dims: vec![4, 4, 4, 4], outer: vec![2, 3, 3, 2], tt: Some(vec![2, 3, 2]) };
    let p = point(&shape, 1);
    let basis = core_tangent_basis(p.core()).unwrap();
    assert_eq!(basis.cols(), tt_manifold_dim(&[2, 3, 3, 2], &[2, 3, 2]));
    let span = dlra_core::tangent::tangent_span(&p).unwrap();
    let factor_dims: usize = [4usize; 4].iter().zip([2usize, 3, 3, 2]).map(|(n, r)| (n - r) * r).sum();
    assert_eq!(span.cols(), basis.cols() + factor_dims);
    // Maximal ranks and dense cores give the full core space.
    let dense = point(&Shape { dims: vec![4, 4], outer: vec![3, 3], tt: None }, 2);
    assert_eq!(core_tangent_basis(dense.core()).unwrap().cols(), 9);
    assert_eq!(tt_manifold_dim(&[2, 3, 2], &[2, 2]), 12);
}

#[test]
fn tangent_vectors_are_fixed_points() {
    let shape = &shapes()[4];
    let p = point(shape, 5);
    let v = tangent_project(&p, &random_tensor(&shape.dims, &mut seeded(6)).unwrap()).unwrap();
    assert!(v.gauge_defect() < 1e-13);
    assert!(v.core_defect().unwrap() < 1e-12);
    // X itself is tangent.
    let x = p.to_dense();
    assert!(proj(&p, &x).sub(&x).unwrap().norm() <= 1e-12 * x.norm());
}

#[test]
fn core_projector_single_site_is_identity() {
    let t = random_tt::<f64, _>(&[3], &[], &mut seeded(3)).unwrap();
    let z = random_tensor::<f64, _>(&[3], &mut seeded(4)).unwrap();
    assert_eq!(core_tangent_project(&t, &z).unwrap(), z);
}

#[test]
fn general_variant_matches_orthonormal_variant() {
    for (i, shape) in shapes().iter().enumerate() {
        let p = point(shape, 40 + i as u64);
        let mut rng = seeded(50 + i as u64);
        // Same tensor, non-orthonormal factors: U ← U R, C ← C ×_μ R⁻¹.
        let (core, factors) = p.clone().into_parts();
        let mut new_core = core;
        let mut new_factors = Vec::new();
        for (mu, u) in factors.iter().enumerate() {
            let r = shape.outer[mu];
            let m = &Matrix::identity(r) + &random_matrix(r, r, &mut rng).scaled(0.3);
            let inv = dlra_core::linalg::spd_solve(&gram(&m), &m.transpose()).unwrap();
            new_core = new_core.mode_multiply(&inv, mu).unwrap();
            new_factors.push(u.matmul(&m));
        }
        let q = ManifoldPoint::new(new_core, new_factors).unwrap();
        assert!(!q.is_orthonormal());
        assert!(q.to_dense().sub(&p.to_dense()).unwrap().norm() < 1e-10 * p.norm());
        let z = random_tensor::<f64, _>(&shape.dims, &mut rng).unwrap();
        let a = proj(&p, &z);
        let v = tangent_project_general(&q, &z).unwrap();
        let b = tangent_to_ambient(&v).unwrap();
        assert!(a.sub(&b).unwrap().norm() <= 1e-9 * z.norm(), "shape {i}");
        assert!(matches!(tangent_project(&q, &z), Err(Error::InvalidArgument(_))));
    }
}

#[test]
fn general_variant_rejects_ill_conditioned_factors() {
    let mut rng = seeded(60);
    let c = random_tensor::<f64, _>(&[2, 2], &mut rng).unwrap();
    let mut u = random_orthonormal::<f64, _>(5, 2, &mut rng);
    for x in u.col_mut(1) {
        *x *= 1e-8;
    }
    let p = ManifoldPoint::new_unchecked(Core::Dense(c), vec![u, random_orthonormal(4, 2, &mut rng)]);
    let z = random_tensor::<f64, _>(&[5, 4], &mut rng).unwrap();
    assert!(matches!(
        tangent_project_general(&p, &z),
        Err(Error::IllConditioned { .. })
    ));
}

#[test]
fn brute_force_rejects_large_ambient() {
    let p = point(&Shape { dims: vec![70, 70], outer: vec![1, 1], tt: None }, 1);
    let z = DenseTensor::zeros(&[70, 70]).unwrap();
    assert!(matches!(brute_force_projector(&p, &z), Err(Error::Oversize { .. })));
}

#[test]
fn polar_alignment_and_basis_inequalities() {
    let mut rng = seeded(70);
    for _ in 0..50 {
        let u = random_orthonormal::<f64, _>(8, 3, &mut rng);
        let v = random_orthonormal::<f64, _>(8, 3, &mut rng);
        let a = polar_align(&u, &v).unwrap();
        // Same span, orthonormal, aligned.
        let pa = a.matmul_t(&a);
        assert!((&pa - &u.matmul_t(&u)).max_abs() < 1e-13);
        let s = a.t_matmul(&v);
        assert!((&s - &s.transpose()).max_abs() < 1e-13);
        let x: Vec<f64> = dlra_core::random::random_vec(3, &mut rng);
        let y: Vec<f64> = dlra_core::random::random_vec(3, &mut rng);
        let rep = check_aligned_bases(&a, &v, &x, &y).unwrap();
        assert!(rep.basis_holds && rep.coefficient_holds, "{rep:?}");
        assert!(matches!(check_aligned_bases(&u, &v, &x, &y), Err(Error::Unaligned(_))) || {
            let s = u.t_matmul(&v);
            (&s - &s.transpose()).max_abs() < 1e-10
        });
    }
    // Identical bases give equality.
    let u = random_orthonormal::<f64, _>(5, 2, &mut rng);
    let rep = check_aligned_bases(&u, &u, &[1.0, 2.0], &[1.0, 2.0]).unwrap();
    assert!(rep.basis_difference < 1e-15 && rep.coefficient_difference == 0.0);
}

#[test]
fn polar_alignment_of_orthogonal_spans() {
    let e = Matrix::<f64>::identity(4);
    let u = e.columns(0, 2);
    let v = e.columns(2, 4);
    let a = polar_align(&u, &v).unwrap();
    assert!((&gram(&a) - &Matrix::identity(2)).max_abs() < 1e-14);
    let rep = check_aligned_bases(&a, &v, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
    assert!(rep.basis_holds && rep.coefficient_holds);
}

#[test]
fn curvature_report_for_matrices() {
    let shape = Shape { dims: vec![6, 5], outer: vec![2, 2], tt: None };
    let p = point(&shape, 80);
    let mut rng = seeded(81);
    for scale in [1e-1, 1e-2, 1e-3] {
        let z = random_tensor::<f64, _>(&shape.dims, &mut rng).unwrap().scaled(scale * p.norm());
        let (q, _) = ManifoldPoint::retract(&p.to_dense().add(&z).unwrap(), &p.ranks()).unwrap();
        let rep = curvature_report(&p, &q).unwrap();
        assert_eq!(rep.sigma_kind, SigmaKind::ExactMatrixDistance);
        assert!(rep.tt_bounds_hold(1e-10), "{rep:?}");
        assert!(rep.tucker_tt_bounds_hold(1e-10), "{rep:?}");
        assert!((rep.distance - p.distance(&q).unwrap()).abs() < 1e-12 * p.norm());
    }
    let same = curvature_report(&p, &p).unwrap();
    assert_eq!(same.projector_difference_norm, 0.0);
    let json = serde_json::to_value(&same).unwrap();
    assert_eq!(json["sigma_kind"], "exact-matrix-distance");
}

#[test]
fn projector_difference_matches_dense_oracle() {
    let shape = Shape { dims: vec![3, 3, 3], outer: vec![2, 2, 2], tt: Some(vec![2, 2]) };
    let p = point(&shape, 90);
    let q = point(&shape, 91);
    let rep = curvature_report(&p, &q).unwrap();
    assert_eq!(rep.sigma_kind, SigmaKind::InterfaceGapHeuristic);
    let basis = |x: &ManifoldPoint<f64>| {
        let n = 27;
        let mut m = Matrix::zeros(n, n);
        let mut e = DenseTensor::zeros(&[3, 3, 3]).unwrap();
        for i in 0..n {
            e.data_mut()[i] = 1.0;
            m.col_mut(i).copy_from_slice(brute_force_projector(x, &e).unwrap().data());
            e.data_mut()[i] = 0.0;
        }
        m
    };
    let d = &basis(&p) - &basis(&q);
    let oracle = dlra_core::linalg::spectral_norm(&d).unwrap();
    assert!((rep.projector_difference_norm - oracle).abs() < 1e-6 * oracle, "{rep:?} {oracle}");
}

fn shape_index() -> impl Strategy<Value = usize> {
    0usize..6
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn projector_is_idempotent(i in shape_index(), seed in any::<u64>()) {
        let shape = &shapes()[i];
        let p = point(shape, seed);
        let z = random_tensor::<f64, _>(&shape.dims, &mut seeded(seed ^ 1)).unwrap();
        let pz = proj(&p, &z);
        let ppz = proj(&p, &pz);
        prop_assert!(ppz.sub(&pz).unwrap().norm() <= tol(&p) * z.norm());
    }

    #[test]
    fn projector_is_self_adjoint(i in shape_index(), seed in any::<u64>()) {
        let shape = &shapes()[i];
        let p = point(shape, seed);
        let mut rng = seeded(seed ^ 2);
        let a = random_tensor::<f64, _>(&shape.dims, &mut rng).unwrap();
        let b = random_tensor::<f64, _>(&shape.dims, &mut rng).unwrap();
        let lhs = proj(&p, &a).inner(&b).unwrap();
        let rhs = a.inner(&proj(&p, &b)).unwrap();
        prop_assert!((lhs - rhs).abs() <= tol(&p) * a.norm() * b.norm());
    }

    #[test]
    fn decomposition_is_orthogonal(i in shape_index(), seed in any::<u64>()) {
        let shape = &shapes()[i];
        let p = point(shape, seed);
        let z = random_tensor::<f64, _>(&shape.dims, &mut seeded(seed ^ 3)).unwrap();
        let v = tangent_project(&p, &z).unwrap();
        let parts = ambient_summands(&v).unwrap();
        let scale = z.norm() * z.norm();
        for a in 0..parts.len() {
            for b in a + 1..parts.len() {
                prop_assert!(parts[a].inner(&parts[b]).unwrap().abs() <= tol(&p) * scale);
            }
        }
        let pz = tangent_to_ambient(&v).unwrap();
        let normal = z.sub(&pz).unwrap();
        for part in &parts {
            prop_assert!(normal.inner(part).unwrap().abs() <= tol(&p) * scale);
        }
    }

    #[test]
    fn general_projection_is_basis_invariant(i in shape_index(), seed in any::<u64>()) {
        let shape = &shapes()[i];
        let p = point(shape, seed);
        let (core, factors) = p.clone().into_parts();
        let mut rng = seeded(seed ^ 4);
        let mut c = core;
        let mut fs = Vec::new();
        for (mu, u) in factors.iter().enumerate() {
            let r = u.cols();
            let q = qr(&random_matrix(r, r, &mut rng)).q;
            c = c.mode_multiply(&q.transpose(), mu).unwrap();
            fs.push(u.matmul(&q));
        }
        let rotated = ManifoldPoint::new(c, fs).unwrap();
        let z = random_tensor::<f64, _>(&shape.dims, &mut rng).unwrap();
        let a = project_ambient(&p, &z).unwrap();
        let b = project_ambient(&rotated, &z).unwrap();
        prop_assert!(a.sub(&b).unwrap().norm() <= tol(&p) * z.norm());
    }
}

#[test]
fn core_projector_matches_matrix_closed_form() {
    let mut rng = seeded(120);
    let t = random_tt::<f64, _>(&[4, 5], &[2], &mut rng).unwrap();
    let z = random_tensor::<f64, _>(&[4, 5], &mut rng).unwrap();
    let x = t.to_dense().unfold(0).unwrap();
    let s = dlra_core::linalg::svd(&x).unwrap();
    let (u, v) = (s.left_vectors.columns(0, 2), s.right_vectors.columns(0, 2));
    let (pu, pv) = (u.matmul_t(&u), v.matmul_t(&v));
    let zm = z.unfold(0).unwrap();
    let oracle = &(&pu.matmul(&zm) + &zm.matmul(&pv)) - &pu.matmul(&zm).matmul(&pv);
    let got = core_tangent_project(&t, &z).unwrap().unfold(0).unwrap();
    assert!((&got - &oracle).max_abs() < 1e-12);
    // The core is its own tangent vector.
    let c = t.to_dense();
    assert!(core_tangent_project(&t, &c).unwrap().max_abs_diff(&c).unwrap() < 1e-12);
}

#[test]
fn brute_force_matches_matrix_closed_form_rank_one() {
    let u = [1.0, 2.0, 2.0].map(|v: f64| v / 3.0);
    let w = [0.6, 0.0, 0.8];
    let core = DenseTensor::new(vec![1, 1], vec![2.5]).unwrap();
    let p = ManifoldPoint::new(
        Core::Dense(core),
        vec![Matrix::from_col_major(3, 1, u.to_vec()).unwrap(), Matrix::from_col_major(3, 1, w.to_vec()).unwrap()],
    )
    .unwrap();
    let z = random_tensor::<f64, _>(&[3, 3], &mut seeded(121)).unwrap();
    let pu = Matrix::from_fn(3, 3, |i, j| u[i] * u[j]);
    let pw = Matrix::from_fn(3, 3, |i, j| w[i] * w[j]);
    let zm = z.unfold(0).unwrap();
    let oracle = &(&pu.matmul(&zm) + &zm.matmul(&pw)) - &pu.matmul(&zm).matmul(&pw);
    let got = brute_force_projector(&p, &z).unwrap().unfold(0).unwrap();
    assert!((&got - &oracle).max_abs() < 1e-12);
    // Tangent inputs are fixed.
    let again = brute_force_projector(&p, &DenseTensor::fold(&oracle, &[3, 3], 0).unwrap()).unwrap();
    assert!((&again.unfold(0).unwrap() - &oracle).max_abs() < 1e-12);
}

#[test]
fn summands_satisfy_pythagoras_and_structure() {
    let shape = &shapes()[3];
    let p = point(shape, 130);
    let z = random_tensor::<f64, _>(&shape.dims, &mut seeded(131)).unwrap();
    let v = tangent_project(&p, &z).unwrap();
    let total = tangent_to_ambient(&v).unwrap().norm().powi(2);
    let parts: f64 = ambient_summands(&v).unwrap().iter().map(|s| s.norm().powi(2)).sum();
    assert!((total - parts).abs() <= 1e-12 * total);
    assert!((ambient_summands(&v).unwrap()[0].norm() - v.core_velocity.norm()).abs() < 1e-12);

    // Only U̇¹ nonzero: mode-1 matricization is U̇¹ (V¹)ᵀ with V¹ = [C ×_{ν≠1} U^ν]_(1)ᵀ.
    let mut single = v.clone();
    single.core_velocity.scale_mut(0.0);
    for f in single.factor_velocities.iter_mut().skip(1) {
        *f = f.scaled(0.0);
    }
    let amb = tangent_to_ambient(&single).unwrap();
    let mut rest = p.core_dense();
    for (nu, u) in p.factors().iter().enumerate().skip(1) {
        rest = rest.mode_multiply(u, nu).unwrap();
    }
    let want = single.factor_velocities[0].matmul(&rest.unfold(0).unwrap());
    assert!((&amb.unfold(0).unwrap() - &want).max_abs() < 1e-12);

    single.factor_velocities[0] = single.factor_velocities[0].scaled(0.0);
    assert_eq!(tangent_to_ambient(&single).unwrap().norm(), 0.0);
}

#[test]
fn complement_inputs_project_to_zero() {
    // z = Q⊥¹ ⊗ Q⊥² (orthogonal to every tangent direction of a rank-(1,1) matrix point).
    let mut rng = seeded(140);
    let p = point(&Shape { dims: vec![4, 4], outer: vec![1, 1], tt: None }, 141);
    let q1 = dlra_core::linalg::orthonormal_complement(&p.factors()[0]);
    let q2 = dlra_core::linalg::orthonormal_complement(&p.factors()[1]);
    let inner = random_matrix::<f64, _>(3, 3, &mut rng);
    let zm = q1.matmul(&inner).matmul_t(&q2);
    let z = DenseTensor::fold(&zm, &[4, 4], 0).unwrap();
    assert!(proj(&p, &z).norm() < 1e-13 * z.norm());
}

#[test]
fn polar_alignment_sign_cases() {
    let u = Matrix::<f64>::from_col_major(3, 1, vec![0.0, 0.6, 0.8]).unwrap();
    let minus = u.scaled(-1.0);
    let a = polar_align(&minus, &u).unwrap();
    assert!((a.t_matmul(&u)[(0, 0)] - 1.0).abs() < 1e-15);
    assert!((&polar_align(&u, &u).unwrap() - &u).max_abs() < 1e-15);
}

#[test]
fn normal_defect_is_second_order() {
    let shape = Shape { dims: vec![3, 3, 3], outer: vec![2, 2, 2], tt: Some(vec![2, 2]) };
    let p = point(&shape, 150);
    let dir = random_tensor::<f64, _>(&shape.dims, &mut seeded(151)).unwrap();
    let dir = dir.scaled(p.norm() / dir.norm());
    let mut ratios = Vec::new();
    for eps in [1e-1, 1e-2, 1e-3] {
        let (q, _) = ManifoldPoint::retract(&p.to_dense().add(&dir.scaled(eps)).unwrap(), &p.ranks()).unwrap();
        let rep = curvature_report(&p, &q).unwrap();
        ratios.push(rep.normal_defect / rep.distance.powi(2));
    }
    for w in ratios.windows(2) {
        assert!(w[1] / w[0] < 4.0 && w[0] / w[1] < 4.0, "{ratios:?}");
    }
}
