//! Tensor-product P1 finite elements on the unit cube with homogeneous
//! Dirichlet conditions, in mass-orthonormal coordinates.
//!
//! Coefficients `c` of the nodal basis are mapped to `y = Lᵀ c` per mode,
//! with `M = L Lᵀ`, so that the discrete L₂ product is the Euclidean one.
//! Operators transform by congruence, `S ↦ L⁻¹ S L⁻ᵀ`, and load vectors by
//! `b ↦ L⁻¹ b`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{
    cholesky, solve_lower, solve_lower_transpose, spectral_norm, sym_eig, Matrix,
};
use crate::manifold::ManifoldPoint;
use crate::random::{random_tensor, seeded};
use crate::scalar::Scalar;
use crate::tangent::project_ambient;
use crate::tensor::DenseTensor;
use crate::tt::TtTensor;

/// Gauss-Legendre points per cell for load integrals.
pub const QUADRATURE_POINTS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct Fem1D<T> {
    n_cells: usize,
    h: T,
    mass: Matrix<T>,
    stiffness: Matrix<T>,
    transfer: Matrix<T>,
    mass_chol: Matrix<T>,
}

/// Uniform P1 discretization of (0, 1) with `n_cells` cells.
pub fn build_fem1d<T: Scalar>(n_cells: usize) -> Result<Fem1D<T>> {
    if n_cells < 2 {
        return Err(invalid(format!("need at least 2 cells, got {n_cells}")));
    }
    let n = n_cells - 1;
    let h = T::one() / T::from_count(n_cells);
    let tri = |diag: T, off: T, sub: T| {
        Matrix::from_fn(n, n, |i, j| {
            if i == j {
                diag
            } else if j == i + 1 {
                off
            } else if i == j + 1 {
                sub
            } else {
                T::zero()
            }
        })
    };
    let mass = tri(T::of(4.0) * h / T::of(6.0), h / T::of(6.0), h / T::of(6.0));
    let stiffness = tri(T::of(2.0) / h, -T::one() / h, -T::one() / h);
    // T[i][j] = ∫ φ_i φ_j′.
    let half = T::of(0.5);
    let transfer = tri(T::zero(), half, -half);
    let mass_chol = cholesky(&mass)?;
    Ok(Fem1D {
        n_cells,
        h,
        mass,
        stiffness,
        transfer,
        mass_chol,
    })
}

impl<T: Scalar> Fem1D<T> {
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_interior(&self) -> usize {
        self.n_cells - 1
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn mass(&self) -> &Matrix<T> {
        &self.mass
    }

    pub fn stiffness(&self) -> &Matrix<T> {
        &self.stiffness
    }

    pub fn transfer(&self) -> &Matrix<T> {
        &self.transfer
    }

    pub fn mass_chol(&self) -> &Matrix<T> {
        &self.mass_chol
    }

    /// Interior node coordinates.
    pub fn nodes(&self) -> Vec<f64> {
        let h = 1.0 / self.n_cells as f64;
        (1..self.n_cells).map(|i| i as f64 * h).collect()
    }

    /// Nodal values of `g`.
    pub fn interpolate(&self, g: &Profile) -> Vec<T> {
        self.nodes().into_iter().map(|x| T::of(g.eval(x))).collect()
    }

    /// `b_i = ∫ g φ_i` by composite Gauss-Legendre quadrature.
    pub fn load_vector(&self, g: &Profile) -> Vec<T> {
        let (pts, wts) = gauss_legendre(QUADRATURE_POINTS);
        let h = 1.0 / self.n_cells as f64;
        let mut b = vec![0.0; self.n_interior()];
        for cell in 0..self.n_cells {
            let a = cell as f64 * h;
            for (&p, &w) in pts.iter().zip(&wts) {
                let s = 0.5 * (p + 1.0);
                let gx = g.eval(a + s * h) * w * 0.5 * h;
                // Left node of the cell carries 1 − s, the right node s.
                if cell >= 1 {
                    b[cell - 1] += gx * (1.0 - s);
                }
                if cell + 1 < self.n_cells {
                    b[cell] += gx * s;
                }
            }
        }
        b.into_iter().map(T::of).collect()
    }
}

/// Gauss-Legendre nodes and weights on [−1, 1] by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 0 { 0.0 } else { p0 };
            dp = n as f64 * (x * p - pm) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Per-mode congruence to mass-orthonormal coordinates.
#[derive(Clone, Debug)]
pub struct MassCoordinates<T> {
    fems: Vec<Fem1D<T>>,
    stiffness: Vec<Matrix<T>>,
    transfer: Vec<Matrix<T>>,
}

fn congruence<T: Scalar>(l: &Matrix<T>, a: &Matrix<T>) -> Matrix<T> {
    // L⁻¹ A L⁻ᵀ = L⁻¹ (L⁻¹ Aᵀ)ᵀ.
    let left = solve_lower(l, &a.transpose());
    solve_lower(l, &left.transpose())
}

/// Builds the mass-orthonormal transforms for a tensor-product space.
pub fn mass_orthonormalize<T: Scalar>(fems: Vec<Fem1D<T>>) -> Result<MassCoordinates<T>> {
    if fems.is_empty() {
        return Err(invalid("at least one dimension expected"));
    }
    let stiffness = fems
        .iter()
        .map(|f| congruence(&f.mass_chol, &f.stiffness).symmetrized())
        .collect();
    let transfer = fems
        .iter()
        .map(|f| congruence(&f.mass_chol, &f.transfer))
        .collect();
    Ok(MassCoordinates {
        fems,
        stiffness,
        transfer,
    })
}

impl<T: Scalar> MassCoordinates<T> {
    /// Uniform grids with the given cell counts.
    pub fn uniform(cells: &[usize]) -> Result<Self> {
        mass_orthonormalize(cells.iter().map(|&n| build_fem1d(n)).collect::<Result<_>>()?)
    }

    pub fn order(&self) -> usize {
        self.fems.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.fems.iter().map(|f| f.n_interior()).collect()
    }

    pub fn fem(&self, mu: usize) -> &Fem1D<T> {
        &self.fems[mu]
    }

    pub fn fems(&self) -> &[Fem1D<T>] {
        &self.fems
    }

    /// `L⁻¹ S L⁻ᵀ` of mode `mu`.
    pub fn stiffness(&self, mu: usize) -> &Matrix<T> {
        &self.stiffness[mu]
    }

    /// `L⁻¹ T L⁻ᵀ` of mode `mu`.
    pub fn transfer(&self, mu: usize) -> &Matrix<T> {
        &self.transfer[mu]
    }

    /// `L⁻¹ M L⁻ᵀ` of mode `mu`, the identity up to roundoff.
    pub fn transformed_mass(&self, mu: usize) -> Matrix<T> {
        let f = &self.fems[mu];
        congruence(&f.mass_chol, &f.mass)
    }

    /// Nodal coefficients to orthonormal coordinates, one mode: `Lᵀ c`.
    pub fn vector_to_ortho(&self, mu: usize, c: &[T]) -> Vec<T> {
        self.fems[mu].mass_chol.t_mul_vec(c)
    }

    /// Orthonormal coordinates to nodal coefficients, one mode: `L⁻ᵀ y`.
    pub fn vector_from_ortho(&self, mu: usize, y: &[T]) -> Vec<T> {
        let b = Matrix::from_col_major(y.len(), 1, y.to_vec()).expect("column");
        solve_lower_transpose(&self.fems[mu].mass_chol, &b).into_data()
    }

    /// Load vector to orthonormal coordinates, one mode: `L⁻¹ b`.
    pub fn load_to_ortho(&self, mu: usize, b: &[T]) -> Vec<T> {
        let m = Matrix::from_col_major(b.len(), 1, b.to_vec()).expect("column");
        solve_lower(&self.fems[mu].mass_chol, &m).into_data()
    }

    /// `Lᵀ` of mode `mu` as a matrix.
    pub fn to_ortho_matrix(&self, mu: usize) -> Matrix<T> {
        self.fems[mu].mass_chol.transpose()
    }

    /// `L⁻ᵀ` of mode `mu` as a matrix.
    pub fn from_ortho_matrix(&self, mu: usize) -> Matrix<T> {
        let n = self.fems[mu].n_interior();
        solve_lower_transpose(&self.fems[mu].mass_chol, &Matrix::identity(n))
    }

    /// Nodal coefficient tensor to orthonormal coordinates.
    pub fn to_ortho(&self, c: &DenseTensor<T>) -> Result<DenseTensor<T>> {
        let mut y = c.clone();
        for mu in 0..self.order() {
            y = y.mode_multiply(&self.to_ortho_matrix(mu), mu)?;
        }
        Ok(y)
    }

    /// Orthonormal coordinates back to nodal coefficients.
    pub fn from_ortho(&self, y: &DenseTensor<T>) -> Result<DenseTensor<T>> {
        let mut c = y.clone();
        for mu in 0..self.order() {
            c = c.mode_multiply(&self.from_ortho_matrix(mu), mu)?;
        }
        Ok(c)
    }

    /// Discrete V-seminorm squared `Σ_λ ⟨S̃_λ y, y⟩` of a dense tensor.
    pub fn v_norm_sq(&self, y: &DenseTensor<T>) -> Result<T> {
        let mut s = T::zero();
        for mu in 0..self.order() {
            s += y.mode_multiply(&self.stiffness[mu], mu)?.inner(y)?;
        }
        Ok(s)
    }

    /// Discrete V-seminorm squared of a manifold point, through its factors.
    pub fn point_v_norm_sq(&self, p: &ManifoldPoint<T>) -> Result<T> {
        let p = if p.is_orthonormal() {
            p.clone()
        } else {
            p.orthonormalized()?
        };
        let c = p.core_dense();
        let mut s = T::zero();
        for (mu, u) in p.factors().iter().enumerate() {
            let small = u.t_matmul(&self.stiffness[mu].matmul(u));
            s += c.mode_multiply(&small, mu)?.inner(&c)?;
        }
        Ok(s)
    }
}

/// Affine diffusion matrix `B(t) = B₀ + t B₁` on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Diffusion<T> {
    b0: Matrix<T>,
    b1: Matrix<T>,
    horizon: T,
    spd_margin: T,
}

impl<T: Scalar> Diffusion<T> {
    /// Validates symmetry and uniform positive definiteness. `λ_min` is
    /// concave in `t` for affine symmetric families, so the endpoints bound
    /// it from below on the whole interval.
    pub fn new(b0: Matrix<T>, b1: Matrix<T>, horizon: T) -> Result<Self> {
        let d = b0.rows();
        if b0.shape() != (d, d) || b1.shape() != (d, d) {
            return Err(invalid("diffusion matrices must be square and of equal size"));
        }
        if !(horizon >= T::zero()) {
            return Err(invalid("horizon must be nonnegative"));
        }
        let scale = b0.max_abs().max(b1.max_abs()).max(T::one());
        for m in [&b0, &b1] {
            if !m.is_finite() {
                return Err(Error::NonFinite);
            }
            if (m - &m.transpose()).max_abs() > T::tol(1e-14) * scale {
                return Err(invalid("diffusion matrices must be symmetric"));
            }
        }
        let b0 = b0.symmetrized();
        let b1 = b1.symmetrized();
        let at_end = &b0 + &b1.scaled(horizon);
        let spd_margin = sym_eig(&b0)?.0[0].min(sym_eig(&at_end)?.0[0]);
        if !(spd_margin > T::zero()) {
            return Err(invalid(format!(
                "B(t) is not positive definite on [0, T] (margin {:e})",
                spd_margin.to_f64_lossy()
            )));
        }
        Ok(Self {
            b0,
            b1,
            horizon,
            spd_margin,
        })
    }

    /// Time-independent `B`.
    pub fn constant(b: Matrix<T>) -> Result<Self> {
        let d = b.rows();
        Self::new(b, Matrix::zeros(d, d), T::zero())
    }

    pub fn order(&self) -> usize {
        self.b0.rows()
    }

    pub fn at(&self, t: T) -> Matrix<T> {
        &self.b0 + &self.b1.scaled(t)
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    /// Lower bound for `λ_min(B(t))` over `[0, horizon]`.
    pub fn spd_margin(&self) -> T {
        self.spd_margin
    }

    /// `‖B₁‖₂`, the Lipschitz constant of the bilinear form in `t` relative
    /// to the V-seminorm.
    pub fn lipschitz(&self) -> Result<T> {
        spectral_norm(&self.b1)
    }

    /// `‖B(t)‖₂` bounds the form from above.
    pub fn upper_bound(&self, t: T) -> Result<T> {
        spectral_norm(&self.at(t))
    }
}

/// Which half of the operator splitting a term belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    /// `b_μμ S̃_μ`, mapping the manifold into its tangent spaces.
    Diagonal,
    /// `b_μν T̃_μ ⊗ T̃_νᵀ`, `μ ≠ ν`.
    Cross,
}

/// Scaled Kronecker term: identity in every mode not listed.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorTerm<T> {
    pub part: Part,
    pub weight: T,
    pub modes: Vec<(usize, Matrix<T>)>,
}

/// Sum of Kronecker terms acting on mass-orthonormal coefficient tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct TtOperator<T> {
    dims: Vec<usize>,
    terms: Vec<OperatorTerm<T>>,
}

/// `A(t) = A₁(t) + A₂(t)` for the diffusion `B(t)`.
pub fn assemble_operator<T: Scalar>(
    coeff: &Diffusion<T>,
    coords: &MassCoordinates<T>,
    t: T,
) -> Result<TtOperator<T>> {
    let d = coords.order();
    if coeff.order() != d {
        return Err(invalid(format!(
            "diffusion is {}×{} for a {d}-dimensional space",
            coeff.order(),
            coeff.order()
        )));
    }
    let b = coeff.at(t);
    let lo = sym_eig(&b)?.0[0];
    if !(lo > T::zero()) {
        return Err(invalid(format!("B({t}) is not positive definite")));
    }
    let mut terms = Vec::with_capacity(d * d);
    for mu in 0..d {
        terms.push(OperatorTerm {
            part: Part::Diagonal,
            weight: b[(mu, mu)],
            modes: vec![(mu, coords.stiffness(mu).clone())],
        });
    }
    for mu in 0..d {
        for nu in 0..d {
            if mu != nu && b[(mu, nu)] != T::zero() {
                terms.push(OperatorTerm {
                    part: Part::Cross,
                    weight: b[(mu, nu)],
                    modes: vec![
                        (mu, coords.transfer(mu).clone()),
                        (nu, coords.transfer(nu).transpose()),
                    ],
                });
            }
        }
    }
    Ok(TtOperator {
        dims: coords.dims(),
        terms,
    })
}

/// `Σ_μ S̃_μ`, the operator of the V-seminorm.
pub fn laplacian<T: Scalar>(coords: &MassCoordinates<T>) -> TtOperator<T> {
    TtOperator {
        dims: coords.dims(),
        terms: (0..coords.order())
            .map(|mu| OperatorTerm {
                part: Part::Diagonal,
                weight: T::one(),
                modes: vec![(mu, coords.stiffness(mu).clone())],
            })
            .collect(),
    }
}

impl<T: Scalar> TtOperator<T> {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn terms(&self) -> &[OperatorTerm<T>] {
        &self.terms
    }

    /// Terms of one part, or all of them.
    pub fn terms_of(&self, part: Option<Part>) -> impl Iterator<Item = &OperatorTerm<T>> {
        self.terms
            .iter()
            .filter(move |t| part.map_or(true, |p| t.part == p))
    }

    /// Action on a dense coefficient tensor.
    pub fn apply(&self, x: &DenseTensor<T>, part: Option<Part>) -> Result<DenseTensor<T>> {
        if x.dims() != self.dims.as_slice() {
            return Err(Error::DimensionMismatch {
                expected: self.dims.clone(),
                found: x.dims().to_vec(),
            });
        }
        let mut out = DenseTensor::zeros(&self.dims)?;
        for term in self.terms_of(part) {
            let mut y = x.clone();
            for (mu, m) in &term.modes {
                y = y.mode_multiply(m, *mu)?;
            }
            out.axpy(term.weight, &y)?;
        }
        Ok(out)
    }

    /// `⟨A x, y⟩`.
    pub fn form(&self, x: &DenseTensor<T>, y: &DenseTensor<T>, part: Option<Part>) -> Result<T> {
        self.apply(x, part)?.inner(y)
    }

    /// Action on a manifold point, densified.
    pub fn apply_point(&self, p: &ManifoldPoint<T>, part: Option<Part>) -> Result<DenseTensor<T>> {
        self.apply(&p.to_dense(), part)
    }
}

/// One-dimensional profile `g(x)` on (0, 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// `sin(k π x)`.
    Sine { k: f64 },
    /// `Σ_j coeffs[j] x^j`.
    Polynomial { coeffs: Vec<f64> },
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Sine { k } => (k * std::f64::consts::PI * x).sin(),
            Profile::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c),
        }
    }
}

/// `c(t) · g₁(x₁) ⋯ g_d(x_d)` with `c` a polynomial in `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceTerm {
    pub time_coeffs: Vec<f64>,
    pub profiles: Vec<Profile>,
}

impl SourceTerm {
    pub fn time_factor(&self, t: f64) -> f64 {
        self.time_coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }
}

/// Finite sum of separable terms.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeparableSource {
    pub terms: Vec<SourceTerm>,
}

impl SeparableSource {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.time_coeffs.iter().all(|&c| c == 0.0))
    }

    /// Same profiles, time factors multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| SourceTerm {
                    time_coeffs: t.time_coeffs.iter().map(|c| c * s).collect(),
                    profiles: t.profiles.clone(),
                })
                .collect(),
        }
    }
}

/// Load terms `(weight, per-mode vectors)` in orthonormal coordinates at
/// time `t`; terms with zero time factor are dropped.
pub fn rhs_terms<T: Scalar>(
    f: &SeparableSource,
    coords: &MassCoordinates<T>,
    t: T,
) -> Result<Vec<(T, Vec<Vec<T>>)>> {
    let d = coords.order();
    let mut out = Vec::with_capacity(f.terms.len());
    for term in &f.terms {
        if term.profiles.len() != d {
            return Err(invalid(format!(
                "source term has {} profiles for {d} dimensions",
                term.profiles.len()
            )));
        }
        let w = term.time_factor(t.to_f64_lossy());
        if w == 0.0 {
            continue;
        }
        let vecs = term
            .profiles
            .iter()
            .enumerate()
            .map(|(mu, g)| coords.load_to_ortho(mu, &coords.fem(mu).load_vector(g)))
            .collect();
        out.push((T::of(w), vecs));
    }
    Ok(out)
}

/// Load tensor at time `t` as a TT with one rank per term.
pub fn assemble_rhs<T: Scalar>(f: &SeparableSource, coords: &MassCoordinates<T>, t: T) -> Result<TtTensor<T>> {
    TtTensor::from_cp_terms(&coords.dims(), &rhs_terms(f, coords, t)?)
}

/// Largest normalized component of `A u` normal to the tangent space at `u`:
/// `max_v |⟨A u, (I − P_u) v⟩| / (‖A u‖ ‖v‖)` over `samples` random `v` and the
/// worst case `v = (I − P_u) A u`.
pub fn check_a1_tangency<T: Scalar>(
    p: &ManifoldPoint<T>,
    op: &TtOperator<T>,
    part: Part,
    samples: usize,
    seed: u64,
) -> Result<T> {
    let au = op.apply_point(p, Some(part))?;
    let norm = au.norm();
    if norm == T::zero() {
        return Ok(T::zero());
    }
    let normal = au.sub(&project_ambient(p, &au)?)?;
    let mut worst = normal.norm() / norm;
    let mut rng = seeded(seed);
    for _ in 0..samples {
        let v = random_tensor::<T, _>(&p.dims(), &mut rng)?;
        let nv = v.sub(&project_ambient(p, &v)?)?;
        let r = au.inner(&nv)?.abs() / (norm * v.norm());
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Both sides of `‖∂_μ∂_ν u‖ ≤ ‖u‖²_{H¹} / (2σ)` for one mode pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedPair {
    pub modes: (usize, usize),
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedDerivativeReport {
    pub sigma: f64,
    pub h1_seminorm_sq: f64,
    pub pairs: Vec<MixedPair>,
    pub all_hold: bool,
}

/// Discrete mixed-smoothness check with the boundary gap as `σ`. The gap
/// never exceeds the mode singular values, so this is the conservative side.
pub fn mixed_derivative_check<T: Scalar>(
    p: &ManifoldPoint<T>,
    coords: &MassCoordinates<T>,
) -> Result<MixedDerivativeReport> {
    let d = p.order();
    if d < 2 {
        return Err(invalid("mixed derivatives need at least two dimensions"));
    }
    if p.dims() != coords.dims() {
        return Err(Error::DimensionMismatch {
            expected: coords.dims(),
            found: p.dims(),
        });
    }
    let q = if p.is_orthonormal() {
        p.clone()
    } else {
        p.orthonormalized()?
    };
    let c = q.core_dense();
    let small: Vec<Matrix<T>> = q
        .factors()
        .iter()
        .enumerate()
        .map(|(mu, u)| u.t_matmul(&coords.stiffness(mu).matmul(u)))
        .collect();
    let mut h1 = T::zero();
    for (mu, s) in small.iter().enumerate() {
        h1 += c.mode_multiply(s, mu)?.inner(&c)?;
    }
    let sigma = q.boundary_gap();
    let rhs = h1 / (T::of(2.0) * sigma);
    let slack = T::tol(1e-12) * rhs.max(T::min_positive_value());
    let mut pairs = Vec::new();
    for mu in 0..d {
        for nu in mu + 1..d {
            let lhs = c
                .mode_multiply(&small[mu], mu)?
                .mode_multiply(&small[nu], nu)?
                .inner(&c)?
                .max(T::zero())
                .sqrt();
            pairs.push(MixedPair {
                modes: (mu, nu),
                lhs: lhs.to_f64_lossy(),
                rhs: rhs.to_f64_lossy(),
                holds: lhs <= rhs + slack,
            });
        }
    }
    Ok(MixedDerivativeReport {
        sigma: sigma.to_f64_lossy(),
        h1_seminorm_sq: h1.to_f64_lossy(),
        all_hold: pairs.iter().all(|p| p.holds),
        pairs,
    })
}

/// P1 injection from `coarse_cells` to `fine_cells` on nested uniform
/// meshes, acting on nodal coefficients.
pub fn prolongation<T: Scalar>(coarse_cells: usize, fine_cells: usize) -> Result<Matrix<T>> {
    if coarse_cells < 2 || fine_cells % coarse_cells != 0 {
        return Err(invalid(format!(
            "meshes with {coarse_cells} and {fine_cells} cells are not nested"
        )));
    }
    let ratio = fine_cells / coarse_cells;
    let (nf, nc) = (fine_cells - 1, coarse_cells - 1);
    Ok(Matrix::from_fn(nf, nc, |i, j| {
        // Fine node i + 1 sits at coarse coordinate (i + 1) / ratio; hat of
        // coarse node j + 1 evaluated there.
        let x = (i + 1) as f64 / ratio as f64;
        T::of((1.0 - (x - (j + 1) as f64).abs()).max(0.0))
    }))
}
