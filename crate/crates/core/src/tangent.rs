//! Tangent spaces of constrained Tucker manifolds.
//!
//! A tangent vector at `X = C ×_μ U^μ` is
//! `Ċ ×_μ U^μ + Σ_μ C ×_μ U̇^μ ×_{ν≠μ} U^ν` with `Ċ` tangent to the core
//! manifold and the gauge `(U^μ)ᵀ U̇^μ = 0`. The d+1 summands are mutually
//! orthogonal.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{
    gram, numerical_rank, spd_condition, spd_solve, spectral_norm, svd, sym_eig, Matrix,
};
use crate::manifold::{Core, ManifoldPoint};
use crate::random::{random_vec, seeded};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;
use crate::tt::{maximal_ranks, TtTensor};

/// Largest ambient size accepted by the dense diagnostics.
pub const MAX_DENSE_AMBIENT: usize = 4096;
/// Condition number above which metric restrictions count as singular.
pub const MAX_CONDITION: f64 = 1e12;

const LANCZOS_TOL: f64 = 1e-10;
const LANCZOS_MAX_DIM: usize = 500;
const LANCZOS_CHECK_EVERY: usize = 5;
const BRUTE_FORCE_RANK_TOL: f64 = 1e-11;

#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector<T> {
    pub base: ManifoldPoint<T>,
    /// `Ċ`, shaped like the core.
    pub core_velocity: DenseTensor<T>,
    /// `U̇^μ`, shaped like the factors.
    pub factor_velocities: Vec<Matrix<T>>,
}

impl<T: Scalar> TangentVector<T> {
    /// Largest entry of `(U^μ)ᵀ U̇^μ` over all modes.
    pub fn gauge_defect(&self) -> T {
        self.base
            .factors()
            .iter()
            .zip(&self.factor_velocities)
            .map(|(u, ud)| u.t_matmul(ud).max_abs())
            .fold(T::zero(), T::max)
    }

    /// `‖P_C Ċ − Ċ‖` for the core tangent projector.
    pub fn core_defect(&self) -> Result<T> {
        match self.base.core() {
            Core::Tt(t) => Ok(core_tangent_project(t, &self.core_velocity)?
                .sub(&self.core_velocity)?
                .norm()),
            Core::Dense(_) => Ok(T::zero()),
        }
    }
}

/// Orthonormal interface bases of a small core: for every interface `m`, the
/// leading left and right singular vectors of the prefix matricization.
struct InterfaceBases<T> {
    dims: Vec<usize>,
    left: Vec<Matrix<T>>,
    right: Vec<Matrix<T>>,
}

fn interface_bases<T: Scalar>(c: &TtTensor<T>) -> Result<InterfaceBases<T>> {
    let dims = c.dims();
    let ranks = c.ranks();
    let x = c.to_dense();
    let total = x.len();
    let mut left = Vec::with_capacity(ranks.len());
    let mut right = Vec::with_capacity(ranks.len());
    for (m, &k) in ranks.iter().enumerate() {
        let rows: usize = dims[..=m].iter().product();
        let s = svd(&x.matricize(&(0..=m).collect::<Vec<_>>())?)?;
        if numerical_rank(&s.singular_values, rows, total / rows) < k {
            return Err(Error::Degenerate {
                interface: m + 1,
                value: s
                    .singular_values
                    .get(k - 1)
                    .copied()
                    .unwrap_or(T::zero())
                    .to_f64_lossy(),
            });
        }
        left.push(s.left_vectors.columns(0, k));
        right.push(s.right_vectors.columns(0, k));
    }
    Ok(InterfaceBases { dims, left, right })
}

impl<T: Scalar> InterfaceBases<T> {
    fn reshape(&self, z: &DenseTensor<T>, m: usize) -> Matrix<T> {
        let rows: usize = self.dims[..=m].iter().product();
        Matrix::from_col_major(rows, z.len() / rows, z.data().to_vec()).expect("prefix shape")
    }

    fn back(&self, m: Matrix<T>) -> DenseTensor<T> {
        DenseTensor::new(self.dims.clone(), m.into_data()).expect("core shape")
    }

    fn project_left(&self, z: &DenseTensor<T>, m: usize) -> DenseTensor<T> {
        let q = &self.left[m];
        let zm = self.reshape(z, m);
        self.back(q.matmul(&q.t_matmul(&zm)))
    }

    fn project_right(&self, z: &DenseTensor<T>, m: usize) -> DenseTensor<T> {
        let v = &self.right[m];
        let zm = self.reshape(z, m);
        self.back(zm.matmul(&v).matmul_t(v))
    }

    /// `Σ_m P_m z` with `P_m = (P_{U≤m−1} ⊗ I − P_{U≤m}) ⊗ P_{V≥m+1}` and
    /// `P_d = P_{U≤d−1} ⊗ I`.
    fn project(&self, z: &DenseTensor<T>) -> DenseTensor<T> {
        let mut prev = z.clone();
        let mut sum = DenseTensor::zeros(z.dims()).expect("dims");
        for m in 0..self.left.len() {
            let lp = self.project_left(z, m);
            let diff = prev.sub(&lp).expect("dims");
            sum.axpy(T::one(), &self.project_right(&diff, m)).expect("dims");
            prev = lp;
        }
        sum.axpy(T::one(), &prev).expect("dims");
        sum
    }
}

/// Orthogonal projection onto the tangent space of the fixed-TT-rank manifold
/// at `c`.
pub fn core_tangent_project<T: Scalar>(c: &TtTensor<T>, z: &DenseTensor<T>) -> Result<DenseTensor<T>> {
    if z.dims() != c.dims().as_slice() {
        return Err(Error::DimensionMismatch {
            expected: c.dims(),
            found: z.dims().to_vec(),
        });
    }
    if c.order() == 1 {
        return Ok(z.clone());
    }
    Ok(interface_bases(c)?.project(z))
}

/// Dimension of the fixed-TT-rank manifold.
pub fn tt_manifold_dim(dims: &[usize], ranks: &[usize]) -> usize {
    let full: Vec<usize> = std::iter::once(1)
        .chain(ranks.iter().copied())
        .chain(std::iter::once(1))
        .collect();
    let params: usize = dims
        .iter()
        .enumerate()
        .map(|(m, &n)| full[m] * n * full[m + 1])
        .sum();
    params - ranks.iter().map(|k| k * k).sum::<usize>()
}

/// Orthonormal basis (as columns of vectorized core tensors) of the tangent
/// space of the core manifold.
pub fn core_tangent_basis<T: Scalar>(core: &Core<T>) -> Result<Matrix<T>> {
    let dims = core.dims();
    let n: usize = dims.iter().product();
    let t = match core {
        Core::Dense(_) => return Ok(Matrix::identity(n)),
        Core::Tt(t) if t.order() == 1 || t.ranks() == maximal_ranks(&dims) => {
            return Ok(Matrix::identity(n))
        }
        Core::Tt(t) => t,
    };
    let bases = interface_bases(t)?;
    let mut p = Matrix::zeros(n, n);
    let mut e = DenseTensor::zeros(&dims)?;
    for i in 0..n {
        e.data_mut()[i] = T::one();
        p.col_mut(i).copy_from_slice(bases.project(&e).data());
        e.data_mut()[i] = T::zero();
    }
    let (vals, vecs) = sym_eig(&p)?;
    let keep: Vec<usize> = (0..n).filter(|&i| vals[i] > T::of(0.5)).collect();
    let expected = tt_manifold_dim(&dims, &t.ranks());
    if keep.len() != expected {
        return Err(Error::Solver(format!(
            "core tangent space has dimension {} instead of {expected}",
            keep.len()
        )));
    }
    let cols: Vec<Vec<T>> = keep.iter().map(|&i| vecs.col(i).to_vec()).collect();
    Matrix::from_columns(n, &cols)
}

fn check_ambient<T: Scalar>(p: &ManifoldPoint<T>, z: &DenseTensor<T>) -> Result<()> {
    if z.dims() != p.dims().as_slice() {
        return Err(Error::DimensionMismatch {
            expected: p.dims(),
            found: z.dims().to_vec(),
        });
    }
    Ok(())
}

/// `z ×_ν mats[ν]ᵀ` for every `ν ≠ skip`.
fn contract_except<T: Scalar>(z: &DenseTensor<T>, mats: &[Matrix<T>], skip: Option<usize>) -> Result<DenseTensor<T>> {
    let mut y = z.clone();
    for (nu, m) in mats.iter().enumerate() {
        if Some(nu) != skip {
            y = y.mode_multiply(&m.transpose(), nu)?;
        }
    }
    Ok(y)
}

/// Tangent projection at a point with orthonormal factors.
pub fn tangent_project<T: Scalar>(p: &ManifoldPoint<T>, z: &DenseTensor<T>) -> Result<TangentVector<T>> {
    if !p.is_orthonormal() {
        return Err(invalid(
            "tangent_project needs orthonormal factors; use tangent_project_general",
        ));
    }
    check_ambient(p, z)?;
    let u = p.factors();
    let c = p.core_dense();
    let cz = contract_except(z, u, None)?;
    let core_velocity = match p.core() {
        Core::Tt(t) => core_tangent_project(t, &cz)?,
        Core::Dense(_) => cz,
    };
    let mut factor_velocities = Vec::with_capacity(u.len());
    for (mu, um) in u.iter().enumerate() {
        let zm = contract_except(z, u, Some(mu))?.unfold(mu)?;
        let normal = &zm - &um.matmul(&um.t_matmul(&zm));
        factor_velocities.push(normal.matmul(&right_pseudo_inverse(&c.unfold(mu)?)?));
    }
    Ok(TangentVector {
        base: p.clone(),
        core_velocity,
        factor_velocities,
    })
}

/// `Cᵀ (C Cᵀ)⁻¹` for a full-row-rank unfolding, from its SVD so the error grows
/// with the condition number rather than its square.
fn right_pseudo_inverse<T: Scalar>(cm: &Matrix<T>) -> Result<Matrix<T>> {
    let r = cm.rows();
    let s = svd(cm)?;
    if s.singular_values.len() < r || !(s.singular_values[r - 1] > T::zero()) {
        return Err(invalid("core unfolding is rank deficient"));
    }
    let mut v = s.right_vectors.columns(0, r);
    for (j, &sigma) in s.singular_values[..r].iter().enumerate() {
        for x in v.col_mut(j) {
            *x = *x / sigma;
        }
    }
    Ok(v.matmul_t(&s.left_vectors.columns(0, r)))
}

/// Tangent projection for factors with arbitrary invertible Gramians.
///
/// The core part is the projection of the coefficients `Z ×_μ (U^μ)⁺` onto
/// the core tangent space, orthogonal in the metric `⊗_μ (U^μ)ᵀ U^μ`; it is
/// solved on an explicit orthonormal basis of that space.
pub fn tangent_project_general<T: Scalar>(p: &ManifoldPoint<T>, z: &DenseTensor<T>) -> Result<TangentVector<T>> {
    check_ambient(p, z)?;
    let u = p.factors();
    let d = u.len();
    let max_cond = T::of(MAX_CONDITION);
    let grams: Vec<Matrix<T>> = u.iter().map(gram).collect();
    for g in &grams {
        let cond = spd_condition(g)?;
        if !(cond <= max_cond) {
            return Err(Error::IllConditioned {
                condition: cond.to_f64_lossy(),
            });
        }
    }
    let c = p.core_dense();
    let mut cz = z.clone();
    for (mu, (um, g)) in u.iter().zip(&grams).enumerate() {
        cz = cz.mode_multiply(&spd_solve(g, &um.transpose())?, mu)?;
    }
    let core_velocity = match p.core() {
        Core::Dense(_) => cz,
        Core::Tt(_) => {
            let basis = core_tangent_basis(p.core())?;
            let dims = c.dims().to_vec();
            let mut metric_basis = Matrix::zeros(basis.rows(), basis.cols());
            for j in 0..basis.cols() {
                let mut b = DenseTensor::new(dims.clone(), basis.col(j).to_vec())?;
                for (mu, g) in grams.iter().enumerate() {
                    b = b.mode_multiply(g, mu)?;
                }
                metric_basis.col_mut(j).copy_from_slice(b.data());
            }
            let system = basis.t_matmul(&metric_basis).symmetrized();
            let cond = spd_condition(&system)?;
            if !(cond <= max_cond) {
                return Err(Error::IllConditioned {
                    condition: cond.to_f64_lossy(),
                });
            }
            let rhs = Matrix::from_col_major(cz.len(), 1, cz.data().to_vec())?;
            let coef = spd_solve(&system, &metric_basis.t_matmul(&rhs))?;
            DenseTensor::new(dims, basis.matmul(&coef).into_data())?
        }
    };
    let mut factor_velocities = Vec::with_capacity(d);
    for (mu, um) in u.iter().enumerate() {
        let cm = c.unfold(mu)?;
        let mz = contract_except(z, u, Some(mu))?.unfold(mu)?.matmul_t(&cm);
        let pu = spd_solve(&grams[mu], &um.t_matmul(&mz))?;
        let normal = &mz - &um.matmul(&pu);
        let mut weighted = c.clone();
        for (nu, g) in grams.iter().enumerate() {
            if nu != mu {
                weighted = weighted.mode_multiply(g, nu)?;
            }
        }
        let vtv = weighted.unfold(mu)?.matmul_t(&cm).symmetrized();
        factor_velocities.push(spd_solve(&vtv, &normal.transpose())?.transpose());
    }
    Ok(TangentVector {
        base: p.clone(),
        core_velocity,
        factor_velocities,
    })
}

/// The d+1 mutually orthogonal ambient summands: the core part first, then
/// one per mode.
pub fn ambient_summands<T: Scalar>(v: &TangentVector<T>) -> Result<Vec<DenseTensor<T>>> {
    let u = v.base.factors();
    let c = v.base.core_dense();
    let mut out = Vec::with_capacity(u.len() + 1);
    let mut first = v.core_velocity.clone();
    for (mu, um) in u.iter().enumerate() {
        first = first.mode_multiply(um, mu)?;
    }
    out.push(first);
    for mu in 0..u.len() {
        let mut s = c.clone();
        for (nu, um) in u.iter().enumerate() {
            let m = if nu == mu { &v.factor_velocities[mu] } else { um };
            s = s.mode_multiply(m, nu)?;
        }
        out.push(s);
    }
    Ok(out)
}

/// Ambient tensor of a tangent vector.
pub fn tangent_to_ambient<T: Scalar>(v: &TangentVector<T>) -> Result<DenseTensor<T>> {
    let mut parts = ambient_summands(v)?.into_iter();
    let mut sum = parts.next().expect("core summand");
    for s in parts {
        sum.axpy(T::one(), &s)?;
    }
    Ok(sum)
}

/// `P_X z` through a dense tangent projection; picks the orthonormal or the
/// general formula as appropriate.
pub fn project_ambient<T: Scalar>(p: &ManifoldPoint<T>, z: &DenseTensor<T>) -> Result<DenseTensor<T>> {
    let v = if p.is_orthonormal() {
        tangent_project(p, z)?
    } else {
        tangent_project_general(p, z)?
    };
    tangent_to_ambient(&v)
}

/// Independent oracle: orthogonal projection onto the span of all partial
/// derivatives of the parametrization `(C, U¹, …, U^d) ↦ C ×_μ U^μ`.
pub fn brute_force_projector<T: Scalar>(p: &ManifoldPoint<T>, z: &DenseTensor<T>) -> Result<DenseTensor<T>> {
    check_ambient(p, z)?;
    let basis = tangent_span(p)?;
    let coef = basis.t_mul_vec(z.data());
    DenseTensor::new(p.dims(), basis.mul_vec(&coef))
}

/// Orthonormal basis of the span of the parametrization derivatives, as
/// columns over the vectorized ambient space.
pub fn tangent_span<T: Scalar>(p: &ManifoldPoint<T>) -> Result<Matrix<T>> {
    let dims = p.dims();
    let ambient: usize = dims.iter().product();
    if ambient > MAX_DENSE_AMBIENT {
        return Err(Error::Oversize {
            size: ambient,
            limit: MAX_DENSE_AMBIENT,
        });
    }
    let u = p.factors();
    let expand = |c: DenseTensor<T>| -> Result<Vec<T>> {
        let mut x = c;
        for (mu, um) in u.iter().enumerate() {
            x = x.mode_multiply(um, mu)?;
        }
        Ok(x.into_data())
    };
    let mut columns = Vec::new();
    match p.core() {
        Core::Dense(c) => {
            let mut e = DenseTensor::zeros(c.dims())?;
            for i in 0..c.len() {
                e.data_mut()[i] = T::one();
                columns.push(expand(e.clone())?);
                e.data_mut()[i] = T::zero();
            }
        }
        Core::Tt(t) => {
            for (m, core) in t.cores().iter().enumerate() {
                let mut e = DenseTensor::zeros(core.dims())?;
                for i in 0..core.len() {
                    e.data_mut()[i] = T::one();
                    columns.push(expand(t.with_core(m, e.clone())?.to_dense())?);
                    e.data_mut()[i] = T::zero();
                }
            }
        }
    }
    let c = p.core_dense();
    for mu in 0..u.len() {
        let mut y = c.clone();
        for (nu, um) in u.iter().enumerate() {
            if nu != mu {
                y = y.mode_multiply(um, nu)?;
            }
        }
        let (n, r) = u[mu].shape();
        for j in 0..r {
            for i in 0..n {
                let mut e = Matrix::zeros(n, r);
                e[(i, j)] = T::one();
                columns.push(y.mode_multiply(&e, mu)?.into_data());
            }
        }
    }
    let jac = Matrix::from_columns(ambient, &columns)?;
    let s = svd(&jac)?;
    let tol = s.singular_values[0] * T::of(BRUTE_FORCE_RANK_TOL);
    let rank = s.singular_values.iter().filter(|&&v| v > tol).count();
    Ok(s.left_vectors.columns(0, rank))
}

/// Rotation `Q` such that `(u Q)ᵀ ũ` is symmetric positive semidefinite.
pub fn polar_rotation<T: Scalar>(u: &Matrix<T>, u_tilde: &Matrix<T>) -> Result<Matrix<T>> {
    if u.shape() != u_tilde.shape() {
        return Err(Error::DimensionMismatch {
            expected: vec![u.rows(), u.cols()],
            found: vec![u_tilde.rows(), u_tilde.cols()],
        });
    }
    let s = svd(&u.t_matmul(u_tilde))?;
    Ok(s.left_vectors.matmul_t(&s.right_vectors))
}

/// Rotates the basis `u` so that `resultᵀ ũ` is symmetric positive
/// semidefinite; the span is unchanged.
pub fn polar_align<T: Scalar>(u: &Matrix<T>, u_tilde: &Matrix<T>) -> Result<Matrix<T>> {
    Ok(u.matmul(&polar_rotation(u, u_tilde)?))
}

/// Both sides of the two basis inequalities for aligned orthonormal bases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisInequalityReport {
    /// `‖U − V‖₂`.
    pub basis_difference: f64,
    /// `√2 ‖P_U − P_V‖₂`.
    pub basis_bound: f64,
    /// `‖x − y‖`.
    pub coefficient_difference: f64,
    /// `√2 ‖U x − V y‖`.
    pub coefficient_bound: f64,
    pub basis_holds: bool,
    pub coefficient_holds: bool,
}

/// Checks `‖U−V‖ ≤ √2‖P_U−P_V‖` and `‖x−y‖ ≤ √2‖Ux−Vy‖` with absolute slack
/// `1e-10`. Requires orthonormal `u`, `v` with `uᵀv` symmetric PSD.
pub fn check_aligned_bases<T: Scalar>(u: &Matrix<T>, v: &Matrix<T>, x: &[T], y: &[T]) -> Result<BasisInequalityReport> {
    if u.shape() != v.shape() || x.len() != u.cols() || y.len() != u.cols() {
        return Err(invalid("bases and coefficient vectors must have matching shapes"));
    }
    let slack = T::of(1e-10);
    for (name, b) in [("u", u), ("v", v)] {
        if (&gram(b) - &Matrix::identity(b.cols())).max_abs() > slack {
            return Err(invalid(format!("{name} is not orthonormal")));
        }
    }
    let cross = u.t_matmul(v);
    if (&cross - &cross.transpose()).max_abs() > slack {
        return Err(Error::Unaligned("uᵀv is not symmetric".into()));
    }
    let (vals, _) = sym_eig(&cross)?;
    if vals.first().is_some_and(|&l| l < -slack) {
        return Err(Error::Unaligned("uᵀv is not positive semidefinite".into()));
    }
    let sqrt2 = T::of(2.0).sqrt();
    let basis_difference = spectral_norm(&(u - v))?;
    let proj = &u.matmul_t(u) - &v.matmul_t(v);
    let basis_bound = sqrt2 * spectral_norm(&proj)?;
    let dxy: Vec<T> = x.iter().zip(y).map(|(&a, &b)| a - b).collect();
    let coefficient_difference = crate::linalg::norm2(&dxy);
    let ux = u.mul_vec(x);
    let vy = v.mul_vec(y);
    let diff: Vec<T> = ux.iter().zip(&vy).map(|(&a, &b)| a - b).collect();
    let coefficient_bound = sqrt2 * crate::linalg::norm2(&diff);
    Ok(BasisInequalityReport {
        basis_difference: basis_difference.to_f64_lossy(),
        basis_bound: basis_bound.to_f64_lossy(),
        coefficient_difference: coefficient_difference.to_f64_lossy(),
        coefficient_bound: coefficient_bound.to_f64_lossy(),
        basis_holds: basis_difference <= basis_bound + slack,
        coefficient_holds: coefficient_difference <= coefficient_bound + slack,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaKind {
    /// Smallest singular value of a matrix, the exact distance to lower rank.
    ExactMatrixDistance,
    /// Boundary gap used in place of the unknown distance; bounds derived from
    /// it are not guaranteed.
    InterfaceGapHeuristic,
}

/// Curvature quantities of a pair of points and the bounds they are compared to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    /// `‖X − Y‖`.
    pub distance: f64,
    /// `‖P_X − P_Y‖₂`.
    pub projector_difference_norm: f64,
    /// `‖(I − P_X)(X − Y)‖`.
    pub normal_defect: f64,
    /// `2d(3√2+1)/σ · ‖X−Y‖`.
    pub tucker_projector_bound: f64,
    /// `√(2d−1)/σ · ‖X−Y‖²`.
    pub tucker_normal_bound: f64,
    /// `4d/σ · ‖X−Y‖`.
    pub tt_projector_bound: f64,
    /// `√(d−1)/σ · ‖X−Y‖²`.
    pub tt_normal_bound: f64,
    pub sigma_used: f64,
    pub sigma_kind: SigmaKind,
    /// Krylov dimension spent on the projector difference.
    pub lanczos_steps: usize,
}

impl CurvatureReport {
    /// Whether both TT-manifold bounds (`4d/σ` and `√(d−1)/σ`) hold, with a
    /// relative slack for roundoff.
    pub fn tt_bounds_hold(&self, rel_slack: f64) -> bool {
        let abs = 1e-13;
        self.projector_difference_norm <= self.tt_projector_bound * (1.0 + rel_slack) + abs
            && self.normal_defect <= self.tt_normal_bound * (1.0 + rel_slack) + abs
    }

    /// Same for the constrained Tucker bounds.
    pub fn tucker_tt_bounds_hold(&self, rel_slack: f64) -> bool {
        let abs = 1e-13;
        self.projector_difference_norm <= self.tucker_projector_bound * (1.0 + rel_slack) + abs
            && self.normal_defect <= self.tucker_normal_bound * (1.0 + rel_slack) + abs
    }
}

/// Operator norm of `P_X − P_Y` by Lanczos iteration, the normal defect,
/// and the curvature bounds in terms of `σ`.
pub fn curvature_report<T: Scalar>(x: &ManifoldPoint<T>, y: &ManifoldPoint<T>) -> Result<CurvatureReport> {
    if x.dims() != y.dims() {
        return Err(Error::DimensionMismatch {
            expected: x.dims(),
            found: y.dims(),
        });
    }
    if x.ranks() != y.ranks() {
        return Err(invalid("points must lie on the same manifold"));
    }
    let ambient: usize = x.dims().iter().product();
    if ambient > MAX_DENSE_AMBIENT {
        return Err(Error::Oversize {
            size: ambient,
            limit: MAX_DENSE_AMBIENT,
        });
    }
    let xo = x.orthonormalized()?;
    let yo = y.orthonormalized()?;
    let diff = xo.to_dense().sub(&yo.to_dense())?;
    let distance = diff.norm();
    let normal = diff.sub(&project_ambient(&xo, &diff)?)?;
    let normal_defect = normal.norm();

    let (projector_difference_norm, lanczos_steps) = if distance == T::zero() {
        (T::zero(), 0)
    } else {
        projector_difference_norm(&xo, &yo)?
    };

    let d = x.order();
    let sigma = xo.boundary_gap();
    let sigma_kind = if d == 2 {
        SigmaKind::ExactMatrixDistance
    } else {
        SigmaKind::InterfaceGapHeuristic
    };
    let (df, dist, s) = (d as f64, distance.to_f64_lossy(), sigma.to_f64_lossy());
    let sqrt2 = std::f64::consts::SQRT_2;
    Ok(CurvatureReport {
        distance: dist,
        projector_difference_norm: projector_difference_norm.to_f64_lossy(),
        normal_defect: normal_defect.to_f64_lossy(),
        tucker_projector_bound: 2.0 * df * (3.0 * sqrt2 + 1.0) / s * dist,
        tucker_normal_bound: (2.0 * df - 1.0).sqrt() / s * dist * dist,
        tt_projector_bound: 4.0 * df / s * dist,
        tt_normal_bound: (df - 1.0).sqrt() / s * dist * dist,
        sigma_used: s,
        sigma_kind,
        lanczos_steps,
    })
}

/// `‖P_X − P_Y‖₂` by Lanczos iteration with full reorthogonalization on the
/// symmetric operator `P_X − P_Y`. Returns the estimate and the Krylov
/// dimension used.
pub fn projector_difference_norm<T: Scalar>(x: &ManifoldPoint<T>, y: &ManifoldPoint<T>) -> Result<(T, usize)> {
    let dims = x.dims();
    let n: usize = dims.iter().product();
    let apply = |v: &[T]| -> Result<Vec<T>> {
        let t = DenseTensor::new(dims.clone(), v.to_vec())?;
        Ok(project_ambient(x, &t)?.sub(&project_ambient(y, &t)?)?.into_data())
    };
    let max_dim = n.min(LANCZOS_MAX_DIM);
    let mut start = random_vec::<T, _>(n, &mut seeded(0x00c0_ffee));
    let s0 = crate::linalg::norm2(&start);
    start.iter_mut().for_each(|v| *v /= s0);
    let mut basis: Vec<Vec<T>> = vec![start];
    let mut alpha: Vec<T> = Vec::new();
    let mut beta: Vec<T> = Vec::new();
    let mut estimate = T::zero();
    for k in 0..max_dim {
        let mut w = apply(&basis[k])?;
        let a = crate::linalg::dot(&w, &basis[k]);
        alpha.push(a);
        // Two passes of Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for q in &basis {
                let c = crate::linalg::dot(&w, q);
                w.iter_mut().zip(q).for_each(|(wi, &qi)| *wi -= c * qi);
            }
        }
        let b = crate::linalg::norm2(&w);
        let dim = k + 1;
        let done = b <= T::tol(1e-14) * alpha.iter().fold(T::one(), |m, &v| m.max(v.abs()))
            || dim == max_dim;
        if done || dim % LANCZOS_CHECK_EVERY == 0 {
            let ritz = tridiagonal_extreme(&alpha, &beta)?;
            let converged = (ritz - estimate).abs() <= T::tol(LANCZOS_TOL) * ritz;
            estimate = ritz;
            if done || converged {
                return Ok((estimate, dim));
            }
        }
        w.iter_mut().for_each(|v| *v /= b);
        beta.push(b);
        basis.push(w);
    }
    Ok((estimate, max_dim))
}

/// Largest eigenvalue modulus of the symmetric tridiagonal matrix.
fn tridiagonal_extreme<T: Scalar>(alpha: &[T], beta: &[T]) -> Result<T> {
    let k = alpha.len();
    let t = Matrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            T::zero()
        }
    });
    let (vals, _) = sym_eig(&t)?;
    Ok(vals.iter().fold(T::zero(), |m, &v| m.max(v.abs())))
}
