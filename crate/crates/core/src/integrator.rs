//! Time integration on the constrained Tucker manifold.
//!
//! Two schemes are provided. Projected implicit Euler solves the implicit
//! Euler equation tested against the full tangent space at the current point
//! and retracts. The projector-splitting scheme sweeps over the mutually
//! orthogonal blocks of the tangent space (one per factor, then the core),
//! solving a small implicit system on each block.
//!
//! All tangent-space linear algebra happens in an explicit orthonormal basis.
//! Operators, sources and tangent vectors are kept as short sums of Tucker
//! terms, so nothing of ambient size is ever formed.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fem::{
    assemble_operator, assemble_rhs, rhs_terms, Diffusion, MassCoordinates, Profile,
    SeparableSource, TtOperator,
};
use crate::linalg::{dot, inv_sqrt_spd, norm2, orthonormal_complement, qr, spd_solve, svd, Matrix};
use crate::manifold::{ManifoldPoint, PointRanks};
use crate::scalar::Scalar;
use crate::tangent::{core_tangent_basis, TangentVector};
use crate::tensor::{increment, DenseTensor};

/// Integration stops once `gap < BREAKDOWN_REL_GAP · ‖u‖`.
pub const BREAKDOWN_REL_GAP: f64 = 1e-8;
/// Directions of a tangent step below this (relative) size do not extend the
/// factor bases used by the retraction.
const EXTENSION_REL_TOL: f64 = 1e-13;
const CG_REL_TOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ProjectedEuler,
    ProjectorSplitting,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::ProjectedEuler => "projected-euler",
            Scheme::ProjectorSplitting => "projector-splitting",
        })
    }
}

/// Semidiscrete problem in mass-orthonormal coordinates.
#[derive(Clone, Debug)]
pub struct Problem<T> {
    pub coords: MassCoordinates<T>,
    pub diffusion: Diffusion<T>,
    pub source: SeparableSource,
    pub initial: ManifoldPoint<T>,
}

impl<T: Scalar> Problem<T> {
    pub fn new(
        coords: MassCoordinates<T>,
        diffusion: Diffusion<T>,
        source: SeparableSource,
        initial: ManifoldPoint<T>,
    ) -> Result<Self> {
        if initial.dims() != coords.dims() {
            return Err(Error::DimensionMismatch {
                expected: coords.dims(),
                found: initial.dims(),
            });
        }
        if diffusion.order() != coords.order() {
            return Err(invalid("diffusion matrix size differs from the dimension"));
        }
        if source.terms.iter().any(|t| t.profiles.len() != coords.order()) {
            return Err(invalid("every source term needs one profile per dimension"));
        }
        Ok(Self {
            coords,
            diffusion,
            source,
            initial,
        })
    }

    pub fn ranks(&self) -> PointRanks {
        self.initial.ranks()
    }

    pub fn operator(&self, t: T) -> Result<TtOperator<T>> {
        assemble_operator(&self.diffusion, &self.coords, t)
    }

    /// Same problem with another initial state.
    pub fn with_initial(&self, initial: ManifoldPoint<T>) -> Result<Self> {
        Self::new(
            self.coords.clone(),
            self.diffusion.clone(),
            self.source.clone(),
            initial,
        )
    }

    /// Same problem with another source.
    pub fn with_source(&self, source: SeparableSource) -> Result<Self> {
        Self::new(
            self.coords.clone(),
            self.diffusion.clone(),
            source,
            self.initial.clone(),
        )
    }

    fn source_terms(&self, t: T) -> Result<Vec<TuckerTerm<T>>> {
        Ok(rhs_terms(&self.source, &self.coords, t)?
            .into_iter()
            .map(|(w, vecs)| TuckerTerm {
                weight: w,
                core: DenseTensor::new(vec![1; vecs.len()], vec![T::one()]).expect("unit core"),
                factors: vecs
                    .into_iter()
                    .map(|v| Matrix::from_col_major(v.len(), 1, v).expect("column"))
                    .collect(),
            })
            .collect())
    }
}

/// Separable initial term `coeff · g₁(x₁) ⋯ g_d(x_d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialTerm {
    pub coeff: f64,
    pub profiles: Vec<Profile>,
}

/// Serializable problem definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    /// Cells per dimension; the dimension is its length.
    pub cells: Vec<usize>,
    /// `B₀`, row by row.
    pub b0: Vec<Vec<f64>>,
    /// `B₁` of `B(t) = B₀ + t B₁`; zero when absent.
    #[serde(default)]
    pub b1: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub source: SeparableSource,
    pub initial: Vec<InitialTerm>,
    pub t_end: f64,
    pub outer_ranks: Vec<usize>,
    /// TT ranks of the core; a plain Tucker core when absent.
    #[serde(default)]
    pub tt_ranks: Option<Vec<usize>>,
}

fn matrix_from_rows<T: Scalar>(rows: &[Vec<f64>], d: usize, name: &str) -> Result<Matrix<T>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(invalid(format!("{name} must be {d}×{d}")));
    }
    Ok(Matrix::from_fn(d, d, |i, j| T::of(rows[i][j])))
}

impl ProblemSpec {
    pub fn order(&self) -> usize {
        self.cells.len()
    }

    pub fn ranks(&self) -> PointRanks {
        PointRanks {
            outer: self.outer_ranks.clone(),
            tt: self.tt_ranks.clone(),
        }
    }

    /// Same problem on another mesh.
    pub fn with_cells(&self, cells: Vec<usize>) -> Self {
        Self {
            cells,
            ..self.clone()
        }
    }

    pub fn build<T: Scalar>(&self) -> Result<Problem<T>> {
        let d = self.order();
        if d == 0 {
            return Err(invalid("at least one dimension expected"));
        }
        if self.outer_ranks.len() != d {
            return Err(invalid("one outer rank per dimension expected"));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(invalid("t_end must be finite and nonnegative"));
        }
        let coords = MassCoordinates::uniform(&self.cells)?;
        let b0 = matrix_from_rows(&self.b0, d, "b0")?;
        let b1 = match &self.b1 {
            Some(rows) => matrix_from_rows(rows, d, "b1")?,
            None => Matrix::zeros(d, d),
        };
        let diffusion = Diffusion::new(b0, b1, T::of(self.t_end))?;
        let initial = initial_from_terms(&coords, &self.initial, &self.ranks())?;
        Problem::new(coords, diffusion, self.source.clone(), initial)
    }
}

/// Nodal interpolation of a sum of separable terms, mapped to orthonormal
/// coordinates and retracted to `ranks`.
pub fn initial_from_terms<T: Scalar>(
    coords: &MassCoordinates<T>,
    terms: &[InitialTerm],
    ranks: &PointRanks,
) -> Result<ManifoldPoint<T>> {
    let d = coords.order();
    if terms.is_empty() {
        return Err(Error::InvalidInitialState("no initial terms".into()));
    }
    if terms.iter().any(|t| t.profiles.len() != d) {
        return Err(invalid("every initial term needs one profile per dimension"));
    }
    let n_terms = terms.len();
    let factors = (0..d)
        .map(|mu| {
            let cols: Vec<Vec<T>> = terms
                .iter()
                .map(|t| coords.vector_to_ortho(mu, &coords.fem(mu).interpolate(&t.profiles[mu])))
                .collect();
            Matrix::from_columns(coords.dims()[mu], &cols)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut core = DenseTensor::zeros(&vec![n_terms; d])?;
    for (i, t) in terms.iter().enumerate() {
        core.set(&vec![i; d], T::of(t.coeff));
    }
    Ok(retract_tucker(&core, &factors, ranks)?.0)
}

/// Retraction of a Tucker tensor `core ×_μ factors[μ]` to `ranks` without
/// forming it: QR of the factors, then a truncation of the small tensor.
pub fn retract_tucker<T: Scalar>(
    core: &DenseTensor<T>,
    factors: &[Matrix<T>],
    ranks: &PointRanks,
) -> Result<(ManifoldPoint<T>, T)> {
    let d = factors.len();
    if core.order() != d || ranks.outer.len() != d {
        return Err(invalid("one factor and one rank per mode expected"));
    }
    if d == 1 {
        // The order-one manifold is the full space with the identity factor.
        return ManifoldPoint::retract(&core.mode_multiply(&factors[0], 0)?, ranks);
    }
    let mut small = core.clone();
    let mut qs = Vec::with_capacity(d);
    for (mu, u) in factors.iter().enumerate() {
        let f = qr(u);
        if ranks.outer[mu] > f.q.cols() {
            return Err(Error::InvalidInitialState(format!(
                "rank {} requested in mode {} of data with rank at most {}",
                ranks.outer[mu],
                mu + 1,
                f.q.cols()
            )));
        }
        small = small.mode_multiply(&f.r, mu)?;
        qs.push(f.q);
    }
    let (p, defect) = ManifoldPoint::retract(&small, ranks)?;
    let (c, f) = p.into_parts();
    let factors = qs.iter().zip(&f).map(|(q, g)| q.matmul(g)).collect();
    Ok((ManifoldPoint::new_unchecked(c, factors).orthonormalized()?, defect))
}

/// `weight · core ×_μ factors[μ]`.
#[derive(Clone, Debug)]
struct TuckerTerm<T> {
    weight: T,
    core: DenseTensor<T>,
    factors: Vec<Matrix<T>>,
}

impl<T: Scalar> TuckerTerm<T> {
    fn of_point(p: &ManifoldPoint<T>) -> Self {
        Self {
            weight: T::one(),
            core: p.core_dense(),
            factors: p.factors().to_vec(),
        }
    }

    fn apply(&self, op: &TtOperator<T>) -> Vec<Self> {
        op.terms()
            .iter()
            .map(|term| {
                let mut t = self.clone();
                t.weight *= term.weight;
                for (mu, m) in &term.modes {
                    t.factors[*mu] = m.matmul(&t.factors[*mu]);
                }
                t
            })
            .collect()
    }
}

fn apply_all<T: Scalar>(terms: &[TuckerTerm<T>], op: &TtOperator<T>) -> Vec<TuckerTerm<T>> {
    terms.iter().flat_map(|t| t.apply(op)).collect()
}

/// Orthonormal basis of the tangent space at an orthonormalized point.
///
/// Coordinates are ordered core block first, then one block per factor. The
/// factor block of mode μ holds `C ×_μ (q_i g_jᵀ) ×_{ν≠μ} U^ν` for the
/// columns `q_i` of the orthogonal complement of `U^μ` and the rows `g_j` of
/// `G_μ^{-1/2}`, `G_μ = C_(μ) C_(μ)ᵀ`.
#[derive(Clone, Debug)]
pub struct TangentFrame<T> {
    point: ManifoldPoint<T>,
    core: DenseTensor<T>,
    /// `None` when the core tangent space is the whole core space.
    core_basis: Option<Matrix<T>>,
    core_dim: usize,
    unfoldings: Vec<Matrix<T>>,
    complements: Vec<Matrix<T>>,
    inv_sqrt_grams: Vec<Matrix<T>>,
    offsets: Vec<usize>,
}

impl<T: Scalar> TangentFrame<T> {
    pub fn new(p: &ManifoldPoint<T>) -> Result<Self> {
        let point = p.orthonormalized()?;
        let core = point.core_dense();
        let basis = core_tangent_basis(point.core())?;
        let full: usize = core.len();
        let core_dim = basis.cols();
        let core_basis = if core_dim == full {
            None
        } else {
            Some(basis)
        };
        let d = point.order();
        let mut unfoldings = Vec::with_capacity(d);
        let mut complements = Vec::with_capacity(d);
        let mut inv_sqrt_grams = Vec::with_capacity(d);
        let mut offsets = vec![0, core_dim];
        for (mu, u) in point.factors().iter().enumerate() {
            let cm = core.unfold(mu)?;
            let q = orthonormal_complement(u);
            inv_sqrt_grams.push(if q.cols() == 0 {
                // No factor block in this mode; the Gramian is never used.
                Matrix::identity(u.cols())
            } else {
                inv_sqrt_spd(&cm.matmul_t(&cm))?
            });
            unfoldings.push(cm);
            offsets.push(offsets[mu + 1] + q.cols() * u.cols());
            complements.push(q);
        }
        Ok(Self {
            point,
            core,
            core_basis,
            core_dim,
            unfoldings,
            complements,
            inv_sqrt_grams,
            offsets,
        })
    }

    pub fn point(&self) -> &ManifoldPoint<T> {
        &self.point
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().expect("offsets")
    }

    /// Coordinate range of block `b`: 0 is the core, `μ + 1` the factor `μ`.
    pub fn block(&self, b: usize) -> Range<usize> {
        self.offsets[b]..self.offsets[b + 1]
    }

    /// Coordinates of the orthogonal projection of `Σ terms`.
    fn coordinates(&self, terms: &[TuckerTerm<T>]) -> Result<Vec<T>> {
        let u = self.point.factors();
        let d = u.len();
        let core_dims = self.core.dims().to_vec();
        let mut cz = DenseTensor::zeros(&core_dims)?;
        let mut mz: Vec<Matrix<T>> = u.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect();
        for term in terms {
            let small: Vec<Matrix<T>> = u
                .iter()
                .zip(&term.factors)
                .map(|(um, w)| um.t_matmul(w))
                .collect();
            for mu in 0..d {
                if self.complements[mu].cols() == 0 {
                    continue;
                }
                let mut part = term.core.clone();
                for (nu, s) in small.iter().enumerate() {
                    if nu != mu {
                        part = part.mode_multiply(s, nu)?;
                    }
                }
                let inner = part.unfold(mu)?.matmul_t(&self.unfoldings[mu]);
                mz[mu].axpy(term.weight, &term.factors[mu].matmul(&inner));
            }
            let mut full = term.core.clone();
            for (nu, s) in small.iter().enumerate() {
                full = full.mode_multiply(s, nu)?;
            }
            cz.axpy(term.weight, &full)?;
        }
        let mut out = Vec::with_capacity(self.dim());
        match &self.core_basis {
            Some(b) => out.extend(b.t_mul_vec(cz.data())),
            None => out.extend_from_slice(cz.data()),
        }
        for mu in 0..d {
            if self.complements[mu].cols() == 0 {
                continue;
            }
            let y = self.complements[mu]
                .t_matmul(&mz[mu])
                .matmul(&self.inv_sqrt_grams[mu]);
            out.extend_from_slice(y.data());
        }
        Ok(out)
    }

    /// Basis vector `j` as a Tucker term.
    fn basis_term(&self, j: usize) -> Result<TuckerTerm<T>> {
        let u = self.point.factors();
        if j < self.core_dim {
            let data = match &self.core_basis {
                Some(b) => b.col(j).to_vec(),
                None => {
                    let mut e = vec![T::zero(); self.core_dim];
                    e[j] = T::one();
                    e
                }
            };
            return Ok(TuckerTerm {
                weight: T::one(),
                core: DenseTensor::new(self.core.dims().to_vec(), data)?,
                factors: u.to_vec(),
            });
        }
        let mu = (0..u.len())
            .find(|&m| self.block(m + 1).contains(&j))
            .ok_or_else(|| invalid(format!("basis index {j} out of range")))?;
        let local = j - self.offsets[mu + 1];
        let q = &self.complements[mu];
        let (i, jj) = (local % q.cols(), local / q.cols());
        let g = &self.inv_sqrt_grams[mu];
        let w = Matrix::from_fn(q.rows(), g.cols(), |a, b| q[(a, i)] * g[(jj, b)]);
        let mut factors = u.to_vec();
        factors[mu] = w;
        Ok(TuckerTerm {
            weight: T::one(),
            core: self.core.clone(),
            factors,
        })
    }

    /// Tangent vector with coordinates `c`.
    pub fn tangent_vector(&self, c: &[T]) -> Result<TangentVector<T>> {
        if c.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: vec![self.dim()],
                found: vec![c.len()],
            });
        }
        let core_coords = &c[..self.core_dim];
        let data = match &self.core_basis {
            Some(b) => b.mul_vec(core_coords),
            None => core_coords.to_vec(),
        };
        let core_velocity = DenseTensor::new(self.core.dims().to_vec(), data)?;
        let factor_velocities = self
            .point
            .factors()
            .iter()
            .enumerate()
            .map(|(mu, u)| {
                let q = &self.complements[mu];
                if q.cols() == 0 {
                    return Ok(Matrix::zeros(u.rows(), u.cols()));
                }
                let y = Matrix::from_col_major(q.cols(), u.cols(), c[self.block(mu + 1)].to_vec())?;
                Ok(q.matmul(&y).matmul(&self.inv_sqrt_grams[mu]))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TangentVector {
            base: self.point.clone(),
            core_velocity,
            factor_velocities,
        })
    }

    fn tangent_terms(&self, v: &TangentVector<T>) -> Vec<TuckerTerm<T>> {
        let u = self.point.factors();
        let mut terms = vec![TuckerTerm {
            weight: T::one(),
            core: v.core_velocity.clone(),
            factors: u.to_vec(),
        }];
        for (mu, w) in v.factor_velocities.iter().enumerate() {
            if self.complements[mu].cols() == 0 {
                continue;
            }
            let mut factors = u.to_vec();
            factors[mu] = w.clone();
            terms.push(TuckerTerm {
                weight: T::one(),
                core: self.core.clone(),
                factors,
            });
        }
        terms
    }

    /// Ambient basis vectors as columns; for diagnostics on small sizes.
    pub fn ambient_basis(&self) -> Result<Matrix<T>> {
        let dims = self.point.dims();
        let n: usize = dims.iter().product();
        let mut cols = Vec::with_capacity(self.dim());
        for j in 0..self.dim() {
            let t = self.basis_term(j)?;
            let mut x = t.core.clone();
            for (mu, w) in t.factors.iter().enumerate() {
                x = x.mode_multiply(w, mu)?;
            }
            cols.push(x.into_data());
        }
        Matrix::from_columns(n, &cols)
    }

    /// Coordinates of the projection of a dense ambient tensor.
    pub fn coordinates_of_dense(&self, z: &DenseTensor<T>) -> Result<Vec<T>> {
        if z.dims() != self.point.dims().as_slice() {
            return Err(Error::DimensionMismatch {
                expected: self.point.dims(),
                found: z.dims().to_vec(),
            });
        }
        self.coordinates(&[TuckerTerm {
            weight: T::one(),
            core: z.clone(),
            factors: z.dims().iter().map(|&n| Matrix::identity(n)).collect(),
        }])
    }

    /// Galerkin matrix `⟨A v_j, v_i⟩` for `i ∈ rows`, `j ∈ cols`.
    fn galerkin(&self, op: &TtOperator<T>, rows: Range<usize>, cols: Range<usize>) -> Result<Matrix<T>> {
        let mut out = Matrix::zeros(rows.len(), cols.len());
        for (jj, j) in cols.enumerate() {
            let applied = self.basis_term(j)?.apply(op);
            let c = self.coordinates(&applied)?;
            out.col_mut(jj).copy_from_slice(&c[rows.clone()]);
        }
        Ok(out)
    }

    /// Retraction of `X + v` for the tangent vector with coordinates `c`,
    /// where `X` is the base point. Returns the point and the truncation error.
    fn retract(&self, c: &[T], ranks: &PointRanks) -> Result<(ManifoldPoint<T>, T)> {
        let v = self.tangent_vector(c)?;
        let u = self.point.factors();
        let d = u.len();
        // Candidate point `C̃ ×_μ U^μ + Σ_μ C ×_μ U̇^μ ×_{ν≠μ} U^ν` with
        // `C̃ = C + Ċ`; the core-block coordinates already include `X`.
        let mut extensions = Vec::with_capacity(d);
        for (mu, w) in v.factor_velocities.iter().enumerate() {
            let scale = T::one().max(w.frobenius_norm());
            if self.complements[mu].cols() == 0 || w.frobenius_norm() == T::zero() {
                extensions.push(Matrix::zeros(w.rows(), 0));
                continue;
            }
            let s = svd(w)?;
            let limit = self.complements[mu].cols();
            let keep = s
                .singular_values
                .iter()
                .take(limit)
                .filter(|&&x| x > T::of(EXTENSION_REL_TOL) * scale)
                .count();
            extensions.push(s.left_vectors.columns(0, keep));
        }
        let r: Vec<usize> = u.iter().map(|m| m.cols()).collect();
        let ext: Vec<usize> = r.iter().zip(&extensions).map(|(a, q)| a + q.cols()).collect();
        let mut big = DenseTensor::zeros(&ext)?;
        embed(&mut big, &v.core_velocity, &vec![0; d]);
        for mu in 0..d {
            let q = &extensions[mu];
            if q.cols() == 0 {
                continue;
            }
            let coef = q.t_matmul(&v.factor_velocities[mu]);
            let block = self.core.mode_multiply(&coef, mu)?;
            let mut offset = vec![0; d];
            offset[mu] = r[mu];
            embed(&mut big, &block, &offset);
        }
        let (small, defect) = ManifoldPoint::retract(&big, ranks)?;
        let (core, f) = small.into_parts();
        let factors = (0..d)
            .map(|mu| {
                let basis = if extensions[mu].cols() == 0 {
                    u[mu].clone()
                } else {
                    u[mu].hcat(&extensions[mu])
                };
                basis.matmul(&f[mu])
            })
            .collect();
        Ok((ManifoldPoint::new_unchecked(core, factors).orthonormalized()?, defect))
    }
}

/// Adds `src` into `dst` at the given offsets.
fn embed<T: Scalar>(dst: &mut DenseTensor<T>, src: &DenseTensor<T>, offset: &[usize]) {
    let dims = src.dims().to_vec();
    let mut idx = vec![0; dims.len()];
    let mut target = vec![0; dims.len()];
    for &x in src.data() {
        for ((t, i), o) in target.iter_mut().zip(&idx).zip(offset) {
            *t = i + o;
        }
        let k = dst.linear_index(&target);
        dst.data_mut()[k] += x;
        increment(&mut idx, &dims);
    }
}

/// One accepted time level.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionState<T> {
    pub time: T,
    pub point: ManifoldPoint<T>,
    pub gap: T,
    pub energy_l2: T,
    /// `Σ_μ ⟨S̃_μ u, u⟩`.
    pub energy_v: T,
    /// Relative Galerkin residual of the step that produced this state.
    pub tangent_residual: T,
    /// Truncation error of the retraction that produced this state.
    pub retraction_defect: T,
    /// `τ · a(t⁺; y, y)` for the tangent-space solution `y` of the step.
    pub dissipation: T,
}

impl<T: Scalar> EvolutionState<T> {
    fn at(time: T, point: ManifoldPoint<T>, coords: &MassCoordinates<T>) -> Result<Self> {
        let point = point.orthonormalized()?;
        let energy_v = coords.point_v_norm_sq(&point)?;
        let norm = point.norm();
        Ok(Self {
            time,
            gap: point.boundary_gap(),
            energy_l2: norm * norm,
            energy_v,
            point,
            tangent_residual: T::zero(),
            retraction_defect: T::zero(),
            dissipation: T::zero(),
        })
    }

    /// Initial state of `problem` at time 0.
    pub fn initial(problem: &Problem<T>) -> Result<Self> {
        Self::at(T::zero(), problem.initial.clone(), &problem.coords)
    }

    pub fn below_threshold(&self) -> bool {
        !(self.gap >= T::of(BREAKDOWN_REL_GAP) * self.energy_l2.sqrt()) || self.gap == T::zero()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Breakdown<T> {
    pub time: T,
    pub gap: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub states: Vec<EvolutionState<T>>,
    pub scheme: Scheme,
    pub step_size: T,
    /// Set when integration stopped at the last state because its gap fell
    /// below the threshold.
    pub breakdown: Option<Breakdown<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn last(&self) -> &EvolutionState<T> {
        self.states.last().expect("trajectories are nonempty")
    }

    /// CSV with a `# {json}` metadata line.
    pub fn to_csv(&self, metadata: &serde_json::Value) -> String {
        let mut out = format!("# {metadata}\n");
        out.push_str("t,gap,energy_l2,energy_v,tangent_residual,retraction_defect\n");
        for s in &self.states {
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e},{:e}\n",
                s.time.to_f64_lossy(),
                s.gap.to_f64_lossy(),
                s.energy_l2.to_f64_lossy(),
                s.energy_v.to_f64_lossy(),
                s.tangent_residual.to_f64_lossy(),
                s.retraction_defect.to_f64_lossy()
            ));
        }
        out
    }
}

fn relative<T: Scalar>(res: &[T], scale: T) -> T {
    let r = norm2(res);
    if scale > T::zero() {
        r / scale
    } else {
        r
    }
}

fn shifted_solve<T: Scalar>(a: &Matrix<T>, tau: T, rhs: &[T]) -> Result<Vec<T>> {
    let n = rhs.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut sys = a.symmetrized().scaled(tau);
    for i in 0..n {
        sys[(i, i)] += T::one();
    }
    let b = Matrix::from_col_major(n, 1, rhs.to_vec())?;
    Ok(spd_solve(&sys, &b)?.into_data())
}

fn check_step<T: Scalar>(s: &EvolutionState<T>, tau: T) -> Result<()> {
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(invalid("step size must be positive"));
    }
    if !s.energy_l2.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// One projected implicit Euler step: find `y` in the tangent space at `u`
/// with `⟨(y − u)/τ + A(t⁺) y − f(t⁺), v⟩ = 0` for all tangent `v`, then
/// retract `y` to the manifold.
pub fn step_projected_implicit_euler<T: Scalar>(
    s: &EvolutionState<T>,
    tau: T,
    problem: &Problem<T>,
) -> Result<EvolutionState<T>> {
    check_step(s, tau)?;
    let t_next = s.time + tau;
    let op = problem.operator(t_next)?;
    let frame = TangentFrame::new(&s.point)?;
    let m = frame.dim();
    let a_hat = frame.galerkin(&op, 0..m, 0..m)?;
    let x_hat = frame.coordinates(&[TuckerTerm::of_point(frame.point())])?;
    let f_hat = frame.coordinates(&problem.source_terms(t_next)?)?;
    let rhs: Vec<T> = x_hat.iter().zip(&f_hat).map(|(&x, &f)| x + tau * f).collect();
    let c = shifted_solve(&a_hat, tau, &rhs)?;

    // Residual recomputed through the factored operator, not the matrix.
    let y = frame.tangent_vector(&c)?;
    let ay = frame.coordinates(&apply_all(&frame.tangent_terms(&y), &op))?;
    let rate: Vec<T> = c.iter().zip(&x_hat).map(|(&a, &b)| (a - b) / tau).collect();
    let res: Vec<T> = (0..m).map(|i| rate[i] + ay[i] - f_hat[i]).collect();
    let scale = norm2(&rate) + norm2(&ay) + norm2(&f_hat);
    let dissipation = tau * dot(&ay, &c);

    let (point, defect) = frame.retract(&c, &problem.ranks())?;
    let mut next = EvolutionState::at(t_next, point, &problem.coords)?;
    next.tangent_residual = relative(&res, scale);
    next.retraction_defect = defect;
    next.dissipation = dissipation;
    Ok(next)
}

/// One Lie–Trotter projector-splitting step: implicit Euler on each factor
/// block in turn (moving only that factor), then on the core block (moving
/// only the core, followed by rounding to the core ranks).
pub fn step_projector_splitting<T: Scalar>(
    s: &EvolutionState<T>,
    tau: T,
    problem: &Problem<T>,
) -> Result<EvolutionState<T>> {
    check_step(s, tau)?;
    let t_next = s.time + tau;
    let op = problem.operator(t_next)?;
    let f_terms = problem.source_terms(t_next)?;
    let ranks = problem.ranks();
    let mut point = s.point.orthonormalized()?;
    let mut worst_residual = T::zero();
    let d = point.order();

    for mu in 0..d {
        let frame = TangentFrame::new(&point)?;
        let block = frame.block(mu + 1);
        if block.is_empty() {
            continue;
        }
        let a_blk = frame.galerkin(&op, block.clone(), block.clone())?;
        let ax = frame.coordinates(&apply_all(&[TuckerTerm::of_point(frame.point())], &op))?;
        let f_hat = frame.coordinates(&f_terms)?;
        let rhs: Vec<T> = block.clone().map(|i| tau * (f_hat[i] - ax[i])).collect();
        let delta = shifted_solve(&a_blk, tau, &rhs)?;
        let a_delta = a_blk.mul_vec(&delta);
        let res: Vec<T> = (0..delta.len())
            .map(|i| delta[i] / tau + ax[block.start + i] + a_delta[i] - f_hat[block.start + i])
            .collect();
        let scale = norm2(&delta) / tau + norm2(&ax[block.clone()]) + norm2(&a_delta) + norm2(&f_hat[block.clone()]);
        worst_residual = worst_residual.max(relative(&res, scale));

        let mut c = vec![T::zero(); frame.dim()];
        c[block].copy_from_slice(&delta);
        let v = frame.tangent_vector(&c)?;
        let (core, mut factors) = frame.point().clone().into_parts();
        factors[mu] = &factors[mu] + &v.factor_velocities[mu];
        point = ManifoldPoint::new_unchecked(core, factors).orthonormalized()?;
    }

    let frame = TangentFrame::new(&point)?;
    let block = frame.block(0);
    let a_blk = frame.galerkin(&op, block.clone(), block.clone())?;
    let x_hat = frame.coordinates(&[TuckerTerm::of_point(frame.point())])?;
    let f_hat = frame.coordinates(&f_terms)?;
    let rhs: Vec<T> = block.clone().map(|i| x_hat[i] + tau * f_hat[i]).collect();
    let c = shifted_solve(&a_blk, tau, &rhs)?;
    let ac = a_blk.mul_vec(&c);
    let res: Vec<T> = block
        .clone()
        .map(|i| (c[i] - x_hat[i]) / tau + ac[i] - f_hat[i])
        .collect();
    let rate: Vec<T> = block.clone().map(|i| (c[i] - x_hat[i]) / tau).collect();
    let scale = norm2(&rate) + norm2(&ac) + norm2(&f_hat[block.clone()]);
    worst_residual = worst_residual.max(relative(&res, scale));
    let dissipation = tau * dot(&ac, &c);

    let mut full = vec![T::zero(); frame.dim()];
    full[block].copy_from_slice(&c);
    let (next_point, defect) = frame.retract(&full, &ranks)?;
    let mut next = EvolutionState::at(t_next, next_point, &problem.coords)?;
    next.tangent_residual = worst_residual;
    next.retraction_defect = defect;
    next.dissipation = dissipation;
    Ok(next)
}

/// Time levels `τ, 2τ, …` up to `t_end`, with a shorter final step if `τ`
/// does not divide `t_end`.
pub fn time_grid<T: Scalar>(tau: T, t_end: T) -> Result<Vec<T>> {
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(invalid("step size must be positive"));
    }
    if !(t_end >= T::zero()) || !t_end.is_finite() {
        return Err(invalid("end time must be finite and nonnegative"));
    }
    let ratio = (t_end / tau).to_f64_lossy();
    let n = (ratio - 1e-9).ceil().max(0.0) as usize;
    Ok((1..=n)
        .map(|k| {
            if k == n {
                t_end
            } else {
                T::from_count(k) * tau
            }
        })
        .collect())
}

/// Integrates from the initial state of `problem` until `t_end` or until the
/// boundary gap falls below the breakdown threshold.
pub fn solve<T: Scalar>(problem: &Problem<T>, scheme: Scheme, tau: T, t_end: T) -> Result<Trajectory<T>> {
    let grid = time_grid(tau, t_end)?;
    let first = EvolutionState::initial(problem)?;
    if first.below_threshold() {
        return Err(Error::InvalidInitialState(format!(
            "initial boundary gap {:e} is below the breakdown threshold",
            first.gap.to_f64_lossy()
        )));
    }
    let mut states = vec![first];
    let mut breakdown = None;
    for &t in &grid {
        let s = states.last().expect("nonempty");
        let h = t - s.time;
        let next = match scheme {
            Scheme::ProjectedEuler => step_projected_implicit_euler(s, h, problem)?,
            Scheme::ProjectorSplitting => step_projector_splitting(s, h, problem)?,
        };
        let stop = next.below_threshold();
        if stop {
            breakdown = Some(Breakdown {
                time: next.time,
                gap: next.gap,
            });
        }
        states.push(next);
        if stop {
            break;
        }
    }
    Ok(Trajectory {
        states,
        scheme,
        step_size: tau,
        breakdown,
    })
}

/// Discrete counterparts of the a-priori energy bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub sup_l2: f64,
    pub sup_v: f64,
    /// `Σ_n τ_n ‖u_n‖²_V`.
    pub v_integral: f64,
    /// `Σ_n ‖u_n − u_{n−1}‖² / τ_n`.
    pub derivative_integral: f64,
    /// `Σ_n τ_n a(y_n, y_n)` over the tangent-space solutions.
    pub form_integral: f64,
    pub initial_l2: f64,
    pub initial_v: f64,
    /// `Σ_n τ_n ‖f(t_n)‖²`.
    pub source_integral: f64,
    /// Largest `(‖u_n‖² + 2 Σ_{k≤n} τ_k a(y_k, y_k)) / bound_n`, where the bound
    /// is `‖u₀‖²` for `f = 0` and otherwise the discrete Grönwall bound
    /// `b_n = (b_{n−1} + τ_n ‖f_n‖²) / (1 − τ_n)`.
    pub max_balance_ratio: f64,
    pub balance_holds: bool,
    pub unbounded_growth: bool,
}

pub fn energy_report<T: Scalar>(tr: &Trajectory<T>, problem: &Problem<T>) -> Result<EnergyReport> {
    let first = tr
        .states
        .first()
        .ok_or_else(|| invalid("empty trajectory"))?;
    let initial_l2 = first.energy_l2.to_f64_lossy();
    let zero_source = problem.source.is_zero();
    let mut rep = EnergyReport {
        sup_l2: initial_l2,
        sup_v: first.energy_v.to_f64_lossy(),
        v_integral: 0.0,
        derivative_integral: 0.0,
        form_integral: 0.0,
        initial_l2,
        initial_v: first.energy_v.to_f64_lossy(),
        source_integral: 0.0,
        max_balance_ratio: 0.0,
        balance_holds: true,
        unbounded_growth: false,
    };
    let mut bound = initial_l2;
    let mut finite = first.energy_l2.is_finite();
    for w in tr.states.windows(2) {
        let (prev, s) = (&w[0], &w[1]);
        let h = (s.time - prev.time).to_f64_lossy();
        let l2 = s.energy_l2.to_f64_lossy();
        let v = s.energy_v.to_f64_lossy();
        finite &= l2.is_finite() && v.is_finite();
        rep.sup_l2 = rep.sup_l2.max(l2);
        rep.sup_v = rep.sup_v.max(v);
        rep.v_integral += h * v;
        let jump = s.point.distance(&prev.point)?.to_f64_lossy();
        rep.derivative_integral += jump * jump / h;
        rep.form_integral += s.dissipation.to_f64_lossy();
        let f = assemble_rhs(&problem.source, &problem.coords, s.time)?.norm().to_f64_lossy();
        rep.source_integral += h * f * f;
        if !zero_source {
            bound = if h < 1.0 {
                (bound + h * f * f) / (1.0 - h)
            } else {
                f64::INFINITY
            };
        }
        let lhs = l2 + 2.0 * rep.form_integral;
        let ratio = if bound > 0.0 { lhs / bound } else if lhs > 0.0 { f64::INFINITY } else { 0.0 };
        rep.max_balance_ratio = rep.max_balance_ratio.max(ratio);
    }
    rep.balance_holds = rep.max_balance_ratio <= 1.0 + 1e-8;
    rep.unbounded_growth = !finite || !rep.balance_holds;
    Ok(rep)
}

/// Unconstrained implicit Euler on the same grid, each step solved by
/// conjugate gradients. Returns `(t, u)` for every time level including 0.
pub fn dense_implicit_euler<T: Scalar>(
    problem: &Problem<T>,
    tau: T,
    t_end: T,
) -> Result<Vec<(T, DenseTensor<T>)>> {
    let grid = time_grid(tau, t_end)?;
    let mut out = vec![(T::zero(), problem.initial.to_dense())];
    for &t in &grid {
        let (t_prev, u) = out.last().expect("nonempty");
        let h = t - *t_prev;
        let op = problem.operator(t)?;
        let mut b = assemble_rhs(&problem.source, &problem.coords, t)?.to_dense();
        b.scale_mut(h);
        b.axpy(T::one(), u)?;
        let x = conjugate_gradient(|v| {
            let mut w = op.apply(v, None)?;
            w.scale_mut(h);
            w.axpy(T::one(), v)?;
            Ok(w)
        }, &b, u)?;
        out.push((t, x));
    }
    Ok(out)
}

fn conjugate_gradient<T: Scalar>(
    apply: impl Fn(&DenseTensor<T>) -> Result<DenseTensor<T>>,
    b: &DenseTensor<T>,
    x0: &DenseTensor<T>,
) -> Result<DenseTensor<T>> {
    let bn = b.norm();
    if bn == T::zero() {
        return DenseTensor::zeros(b.dims());
    }
    let tol = T::tol(CG_REL_TOL) * bn;
    let mut x = x0.clone();
    let mut r = b.sub(&apply(&x)?)?;
    let mut p = r.clone();
    let mut rr = r.inner(&r)?;
    let max_iter = 10 * b.len() + 100;
    for _ in 0..max_iter {
        if rr.sqrt() <= tol {
            return Ok(x);
        }
        let ap = apply(&p)?;
        let alpha = rr / p.inner(&ap)?;
        x.axpy(alpha, &p)?;
        r.axpy(-alpha, &ap)?;
        let rr_new = r.inner(&r)?;
        let beta = rr_new / rr;
        rr = rr_new;
        let mut next = r.clone();
        next.axpy(beta, &p)?;
        p = next;
    }
    if rr.sqrt() <= T::of(1e3) * tol {
        return Ok(x);
    }
    Err(Error::Solver(format!(
        "conjugate gradients stalled at relative residual {:e}",
        (rr.sqrt() / bn).to_f64_lossy()
    )))
}
