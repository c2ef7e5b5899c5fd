use dlra_core::fem::{
    assemble_operator, assemble_rhs, build_fem1d, check_a1_tangency, gauss_legendre, laplacian,
    mass_orthonormalize, mixed_derivative_check, prolongation, Diffusion, MassCoordinates, Part,
    Profile, SeparableSource, SourceTerm,
};
use dlra_core::linalg::{sym_eig, Matrix};
use dlra_core::manifold::{Core, ManifoldPoint};
use dlra_core::random::{random_orthonormal, random_point, random_tensor, random_tt, seeded};
use dlra_core::{DenseTensor, TtTensor};
use nalgebra::DMatrix;

fn na(m: &Matrix<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(m.rows(), m.cols(), m.data())
}

/// Dense matrix of the operator on vec(x) with mode 1 fastest: the Kronecker
/// product lists the slowest mode first.
fn kron_chain(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    mats.iter().rev().skip(1).fold(mats.last().unwrap().clone(), |acc, m| acc.kronecker(m))
}

fn dense_operator(coords: &MassCoordinates<f64>, b: &Matrix<f64>, part: Option<Part>) -> DMatrix<f64> {
    let d = coords.order();
    let ids: Vec<DMatrix<f64>> = coords.dims().iter().map(|&n| DMatrix::identity(n, n)).collect();
    let n: usize = coords.dims().iter().product();
    let mut a = DMatrix::zeros(n, n);
    for mu in 0..d {
        for nu in 0..d {
            let mut mats = ids.clone();
            if mu == nu {
                if part == Some(Part::Cross) {
                    continue;
                }
                mats[mu] = na(coords.stiffness(mu));
            } else {
                if part == Some(Part::Diagonal) {
                    continue;
                }
                mats[mu] = na(coords.transfer(mu));
                mats[nu] = na(coords.transfer(nu)).transpose();
            }
            a += kron_chain(&mats) * b[(mu, nu)];
        }
    }
    a
}

#[test]
fn one_dimensional_stencils() {
    let f = build_fem1d::<f64>(8).unwrap();
    let h = 0.125;
    assert_eq!(f.n_interior(), 7);
    let (m, s, t) = (f.mass(), f.stiffness(), f.transfer());
    assert!((m[(3, 2)] - h / 6.0).abs() < 1e-16 && (m[(3, 3)] - 4.0 * h / 6.0).abs() < 1e-16);
    assert!((s[(3, 2)] + 1.0 / h).abs() < 1e-14 && (s[(3, 3)] - 2.0 / h).abs() < 1e-14);
    assert_eq!((t[(3, 2)], t[(3, 3)], t[(3, 4)]), (-0.5, 0.0, 0.5));
    assert_eq!((t + &t.transpose()).max_abs(), 0.0);
    assert_eq!(m[(0, 5)], 0.0);
    assert!(build_fem1d::<f64>(1).is_err());
}

#[test]
fn transfer_matches_quadrature_of_basis_products() {
    // ∫ φ_i φ_j′ by exact integration of piecewise-linear hats.
    let n = 6;
    let f = build_fem1d::<f64>(n).unwrap();
    let h = 1.0 / n as f64;
    let hat = |i: usize, x: f64| (1.0 - ((x - (i + 1) as f64 * h) / h).abs()).max(0.0);
    let dhat = |i: usize, x: f64| {
        let c = (i + 1) as f64 * h;
        if x > c - h && x < c {
            1.0 / h
        } else if x > c && x < c + h {
            -1.0 / h
        } else {
            0.0
        }
    };
    let (pts, wts) = gauss_legendre(4);
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            let mut v = 0.0;
            for cell in 0..n {
                let a = cell as f64 * h;
                for (&p, &w) in pts.iter().zip(&wts) {
                    let x = a + 0.5 * (p + 1.0) * h;
                    v += w * 0.5 * h * hat(i, x) * dhat(j, x);
                }
            }
            assert!((v - f.transfer()[(i, j)]).abs() < 1e-14, "{i} {j}");
        }
    }
}

#[test]
fn first_generalized_eigenvalue_approaches_pi_squared() {
    let coords = MassCoordinates::<f64>::uniform(&[64]).unwrap();
    let (vals, _) = sym_eig(coords.stiffness(0)).unwrap();
    let pi2 = std::f64::consts::PI.powi(2);
    assert!((vals[0] - pi2).abs() < 0.02 * pi2);
    // Oracle: generalized eigenproblem through nalgebra's Cholesky.
    let f = coords.fem(0);
    let l = na(f.mass()).cholesky().unwrap().l();
    let li = l.clone().try_inverse().unwrap();
    let mut oracle: Vec<f64> = (&li * na(f.stiffness()) * li.transpose())
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (a, b) in vals.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-10 * oracle.last().unwrap());
    }
}

#[test]
fn mass_orthonormal_transform() {
    let coords = MassCoordinates::<f64>::uniform(&[9, 7]).unwrap();
    for mu in 0..2 {
        let m = coords.transformed_mass(mu);
        assert!((&m - &Matrix::identity(m.rows())).max_abs() < 1e-12);
    }
    let c = random_tensor::<f64, _>(&coords.dims(), &mut seeded(1)).unwrap();
    let back = coords.from_ortho(&coords.to_ortho(&c).unwrap()).unwrap();
    assert!(back.sub(&c).unwrap().norm() <= 1e-12 * c.norm());
    // ‖y‖² is the discrete L₂ norm cᵀ (M⊗M) c.
    let y = coords.to_ortho(&c).unwrap();
    let mc = c
        .mode_multiply(coords.fem(0).mass(), 0)
        .unwrap()
        .mode_multiply(coords.fem(1).mass(), 1)
        .unwrap();
    assert!((y.norm().powi(2) - mc.inner(&c).unwrap()).abs() < 1e-12 * mc.inner(&c).unwrap());
    let v = coords.vector_from_ortho(1, &coords.vector_to_ortho(1, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    assert!(v.iter().zip(1..).all(|(a, b)| (a - b as f64).abs() < 1e-12));
    assert!(mass_orthonormalize::<f64>(vec![]).is_err());
}

#[test]
fn operator_matches_kronecker_oracle() {
    let coords = MassCoordinates::<f64>::uniform(&[8, 8, 8]).unwrap();
    let b0 = Matrix::from_rows(&[&[1.0, 0.3, -0.2], &[0.3, 1.5, 0.25], &[-0.2, 0.25, 0.8]]).unwrap();
    let b1 = Matrix::from_rows(&[&[0.1, 0.05, 0.0], &[0.05, 0.0, 0.0], &[0.0, 0.0, -0.1]]).unwrap();
    let coeff = Diffusion::new(b0, b1, 1.0).unwrap();
    let t = 0.7;
    let op = assemble_operator(&coeff, &coords, t).unwrap();
    let b = coeff.at(t);
    let mut rng = seeded(2);
    let rank_one = TtTensor::rank_one(&[
        &dlra_core::random::random_vec::<f64, _>(7, &mut rng),
        &dlra_core::random::random_vec::<f64, _>(7, &mut rng),
        &dlra_core::random::random_vec::<f64, _>(7, &mut rng),
    ])
    .unwrap()
    .to_dense();
    let general = random_tensor::<f64, _>(&[7, 7, 7], &mut rng).unwrap();
    for part in [None, Some(Part::Diagonal), Some(Part::Cross)] {
        let dense = dense_operator(&coords, &b, part);
        for x in [&rank_one, &general] {
            let got = op.apply(x, part).unwrap();
            let want = &dense * nalgebra::DVector::from_column_slice(x.data());
            let err = (nalgebra::DVector::from_column_slice(got.data()) - &want).norm();
            assert!(err <= 1e-10 * want.norm(), "{part:?}");
        }
    }
    // Splitting consistency.
    let a = op.apply(&general, None).unwrap();
    let split = op
        .apply(&general, Some(Part::Diagonal))
        .unwrap()
        .add(&op.apply(&general, Some(Part::Cross)).unwrap())
        .unwrap();
    assert!(a.sub(&split).unwrap().norm() <= 1e-12 * a.norm());
}

#[test]
fn identity_diffusion_has_no_cross_terms() {
    let coords = MassCoordinates::<f64>::uniform(&[5, 6, 4]).unwrap();
    let op = assemble_operator(&Diffusion::constant(Matrix::identity(3)).unwrap(), &coords, 0.0).unwrap();
    assert!(op.terms().iter().all(|t| t.part == Part::Diagonal));
    let x = random_tensor::<f64, _>(&coords.dims(), &mut seeded(3)).unwrap();
    let lap = laplacian(&coords).apply(&x, None).unwrap();
    assert_eq!(op.apply(&x, None).unwrap(), lap);
    assert_eq!(op.apply(&x, Some(Part::Cross)).unwrap().norm(), 0.0);
}

#[test]
fn symmetry_coercivity_and_lipschitz() {
    let coords = MassCoordinates::<f64>::uniform(&[6, 5, 7]).unwrap();
    let b0 = Matrix::from_rows(&[&[1.0, 0.4, 0.1], &[0.4, 1.0, -0.3], &[0.1, -0.3, 1.2]]).unwrap();
    let b1 = Matrix::from_rows(&[&[0.2, -0.1, 0.0], &[-0.1, 0.1, 0.05], &[0.0, 0.05, 0.0]]).unwrap();
    let coeff = Diffusion::new(b0, b1, 1.0).unwrap();
    let margin = coeff.spd_margin();
    assert!(margin > 0.0);
    let lip = coeff.lipschitz().unwrap();
    let mut rng = seeded(4);
    let (s, t) = (0.1, 0.9);
    let (op_s, op_t) = (
        assemble_operator(&coeff, &coords, s).unwrap(),
        assemble_operator(&coeff, &coords, t).unwrap(),
    );
    for _ in 0..50 {
        let x = random_tensor::<f64, _>(&coords.dims(), &mut rng).unwrap();
        let y = random_tensor::<f64, _>(&coords.dims(), &mut rng).unwrap();
        let (axy, xay) = (op_t.form(&x, &y, None).unwrap(), op_t.form(&y, &x, None).unwrap());
        assert!((axy - xay).abs() <= 1e-10 * axy.abs().max(1.0));
        let vx = coords.v_norm_sq(&x).unwrap();
        let vy = coords.v_norm_sq(&y).unwrap();
        assert!(op_t.form(&x, &x, None).unwrap() >= margin * vx * (1.0 - 1e-12));
        let diff = op_t.form(&x, &y, None).unwrap() - op_s.form(&x, &y, None).unwrap();
        assert!(diff.abs() <= lip * (t - s) * (vx * vy).sqrt() * (1.0 + 1e-12));
    }
}

#[test]
fn coercivity_with_off_diagonal_margin() {
    let coords = MassCoordinates::<f64>::uniform(&[8, 8]).unwrap();
    for c in [0.0, 0.5, 0.9, -0.95] {
        let b = Matrix::from_rows(&[&[1.0, c], &[c, 1.0]]).unwrap();
        let op = assemble_operator(&Diffusion::constant(b).unwrap(), &coords, 0.0).unwrap();
        let dense = dense_operator(&coords, &op_b(c), None);
        let mut rng = seeded(5);
        for _ in 0..50 {
            let x = random_tensor::<f64, _>(&coords.dims(), &mut rng).unwrap();
            let q = op.form(&x, &x, None).unwrap();
            let v = coords.v_norm_sq(&x).unwrap();
            assert!(q >= (1.0 - c.abs()) * v * (1.0 - 1e-12));
            let xv = nalgebra::DVector::from_column_slice(x.data());
            assert!((q - xv.dot(&(&dense * &xv))).abs() < 1e-10 * q);
        }
    }
    let bad = Matrix::from_rows(&[&[1.0, 1.5], &[1.5, 1.0]]).unwrap();
    assert!(Diffusion::constant(bad).is_err());
    let asym = Matrix::from_rows(&[&[1.0, 0.1], &[0.0, 1.0]]).unwrap();
    assert!(Diffusion::constant(asym).is_err());
}

fn op_b(c: f64) -> Matrix<f64> {
    Matrix::from_rows(&[&[1.0, c], &[c, 1.0]]).unwrap()
}

#[test]
fn loads_match_quadrature() {
    let coords = MassCoordinates::<f64>::uniform(&[10, 10, 10]).unwrap();
    assert_eq!(assemble_rhs(&SeparableSource::zero(), &coords, 0.5).unwrap().to_dense().norm(), 0.0);

    let one = Profile::Polynomial { coeffs: vec![1.0] };
    let f1 = build_fem1d::<f64>(10).unwrap();
    assert!(f1.load_vector(&one).iter().all(|&v| (v - 0.1).abs() < 1e-15));

    let sine = Profile::Sine { k: 1.0 };
    let f = SeparableSource {
        terms: vec![SourceTerm {
            time_coeffs: vec![2.0, 1.0],
            profiles: vec![sine.clone(), sine.clone(), sine.clone()],
        }],
    };
    let tt = assemble_rhs(&f, &coords, 0.5).unwrap();
    assert_eq!(tt.ranks(), vec![1, 1]);
    // Analytic: ∫ sin(πx) φ_i = h · sin(πx_i) · 2(1 − cos(πh)) / (πh)².
    let h: f64 = 0.1;
    let ph = std::f64::consts::PI * h;
    let analytic: Vec<f64> = f1.nodes().iter().map(|&x| h * (std::f64::consts::PI * x).sin() * 2.0 * (1.0 - ph.cos()) / (ph * ph)).collect();
    let loads = f1.load_vector(&sine);
    for (a, b) in loads.iter().zip(&analytic) {
        assert!((a - b).abs() < 1e-13);
    }
    let nodal = DenseTensor::outer(&[&analytic, &analytic, &analytic]).unwrap().scaled(2.5);
    // Orthonormal coordinates: L⁻¹ b per mode.
    let mut want = nodal;
    for mu in 0..3 {
        let li = coords.from_ortho_matrix(mu).transpose();
        want = want.mode_multiply(&li, mu).unwrap();
    }
    assert!(tt.to_dense().sub(&want).unwrap().norm() <= 1e-12 * want.norm());

    // Two terms give TT rank 2.
    let two = SeparableSource {
        terms: vec![f.terms[0].clone(), SourceTerm { time_coeffs: vec![1.0], profiles: vec![one.clone(), one.clone(), one] }],
    };
    assert_eq!(assemble_rhs(&two, &coords, 0.0).unwrap().ranks(), vec![2, 2]);
}

#[test]
fn gauss_legendre_is_exact_for_high_degree() {
    let (x, w) = gauss_legendre(10);
    for deg in 0..20 {
        let q: f64 = x.iter().zip(&w).map(|(&p, &wi)| wi * p.powi(deg)).sum();
        let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
        assert!((q - exact).abs() < 1e-14, "degree {deg}");
    }
}

#[test]
fn diagonal_part_is_tangent_cross_part_is_not() {
    let coords = MassCoordinates::<f64>::uniform(&[8, 8, 8]).unwrap();
    let b = Matrix::from_rows(&[&[1.0, 0.4, 0.3], &[0.4, 1.2, -0.35], &[0.3, -0.35, 0.9]]).unwrap();
    let op = assemble_operator(&Diffusion::constant(b).unwrap(), &coords, 0.0).unwrap();
    let mut rng = seeded(6);
    let p = random_point::<f64, _>(&[7, 7, 7], &[2, 2, 2], Some(&[2, 2]), &mut rng).unwrap();
    let r1 = check_a1_tangency(&p, &op, Part::Diagonal, 20, 7).unwrap();
    assert!(r1 <= 1e-10, "{r1:e}");
    let r2 = check_a1_tangency(&p, &op, Part::Cross, 20, 7).unwrap();
    assert!(r2 >= 1e-2, "{r2:e}");
    let scaled = check_a1_tangency(&p.scaled(5.0), &op, Part::Diagonal, 20, 7).unwrap();
    assert!(scaled <= 1e-10);
    let r2s = check_a1_tangency(&p.scaled(5.0), &op, Part::Cross, 20, 7).unwrap();
    assert!((r2s - r2).abs() < 1e-10);

    // Rank-1 point, diagonal B.
    let diag = Matrix::from_diag(&[1.0, 2.0, 0.5]);
    let op = assemble_operator(&Diffusion::constant(diag).unwrap(), &coords, 0.0).unwrap();
    let p1 = random_point::<f64, _>(&[7, 7, 7], &[1, 1, 1], Some(&[1, 1]), &mut rng).unwrap();
    assert!(check_a1_tangency(&p1, &op, Part::Diagonal, 20, 8).unwrap() <= 1e-10);
}

#[test]
fn mixed_derivative_inequality() {
    let coords = MassCoordinates::<f64>::uniform(&[9, 9]).unwrap();
    // Rank one with unit L₂ factors: lhs = ‖a′‖‖b′‖, rhs = (‖a′‖² + ‖b′‖²)/2.
    let mut rng = seeded(9);
    let a = random_orthonormal::<f64, _>(8, 1, &mut rng);
    let b = random_orthonormal::<f64, _>(8, 1, &mut rng);
    let p = ManifoldPoint::new(Core::Dense(DenseTensor::new(vec![1, 1], vec![1.0]).unwrap()), vec![a.clone(), b.clone()]).unwrap();
    let rep = mixed_derivative_check(&p, &coords).unwrap();
    let da = a.t_matmul(&coords.stiffness(0).matmul(&a))[(0, 0)];
    let db = b.t_matmul(&coords.stiffness(1).matmul(&b))[(0, 0)];
    assert!((rep.pairs[0].lhs - (da * db).sqrt()).abs() < 1e-10 * rep.pairs[0].lhs);
    assert!((rep.pairs[0].rhs - 0.5 * (da + db)).abs() < 1e-10 * rep.pairs[0].rhs);
    assert!(rep.all_hold);
    // Equal derivative norms give equality.
    let same = ManifoldPoint::new(Core::Dense(DenseTensor::new(vec![1, 1], vec![1.0]).unwrap()), vec![a.clone(), a]).unwrap();
    let rep = mixed_derivative_check(&same, &coords).unwrap();
    assert!((rep.pairs[0].lhs - rep.pairs[0].rhs).abs() < 1e-10 * rep.pairs[0].rhs && rep.all_hold);

    let coords3 = MassCoordinates::<f64>::uniform(&[7, 8, 6]).unwrap();
    for seed in 0..20 {
        let p = random_point::<f64, _>(&[6, 7, 5], &[2, 3, 2], Some(&[2, 2]), &mut seeded(seed)).unwrap();
        let rep = mixed_derivative_check(&p, &coords3).unwrap();
        assert!(rep.all_hold, "{rep:?}");
        assert_eq!(rep.pairs.len(), 3);
    }

    // Near the boundary: gap 1e-3 inflates the right side by 1e3.
    let c = random_tt::<f64, _>(&[2, 2], &[2], &mut rng).unwrap().to_dense();
    let s = dlra_core::linalg::svd(&c.unfold(0).unwrap()).unwrap();
    let core = DenseTensor::fold(
        &s.left_vectors.matmul(&Matrix::from_diag(&[1.0, 1e-3])).matmul_t(&s.right_vectors),
        &[2, 2],
        0,
    )
    .unwrap();
    let f = vec![random_orthonormal(8, 2, &mut rng), random_orthonormal(8, 2, &mut rng)];
    let near = ManifoldPoint::new(Core::Dense(core), f).unwrap();
    let rep = mixed_derivative_check(&near, &coords).unwrap();
    assert!((rep.sigma - 1e-3).abs() < 1e-12);
    assert!(rep.all_hold && rep.pairs[0].rhs > 1e2 * rep.pairs[0].lhs);
}

#[test]
fn prolongation_is_exact_for_linear_hats() {
    let p = prolongation::<f64>(4, 8).unwrap();
    assert_eq!(p.shape(), (7, 3));
    // Coarse node 1 (x = 0.25) maps to fine nodes at 0.125, 0.25, 0.375.
    assert_eq!(p.col(0), &[0.5, 1.0, 0.5, 0.0, 0.0, 0.0, 0.0]);
    assert!(prolongation::<f64>(3, 8).is_err());
    // Interpolating a piecewise-linear function is exact.
    let fc = build_fem1d::<f64>(4).unwrap();
    let ff = build_fem1d::<f64>(8).unwrap();
    let g = Profile::Polynomial { coeffs: vec![0.0, 1.0] };
    let fine = p.mul_vec(&fc.interpolate(&g));
    let direct = ff.interpolate(&g);
    // x is linear between coarse nodes but the Dirichlet hat at the right end
    // is not x, so compare interior nodes before the last coarse node only.
    for i in 0..5 {
        assert!((fine[i] - direct[i]).abs() < 1e-15);
    }
}
