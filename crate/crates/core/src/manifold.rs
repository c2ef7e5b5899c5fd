//! Constrained Tucker points `X = C ×₁ U¹ ×₂ ⋯ ×_d U^d` whose core is either
//! a tensor train of fixed rank or an unconstrained dense tensor.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{gram, numerical_rank, qr, svd, sym_eig, Matrix};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;
use crate::tt::{InterfaceSpectrum, RankSpec, TtTensor};

/// Smallest admissible `λ_min / λ_max` of a factor Gramian.
pub const GRAM_RATIO_TOL: f64 = 1e-12;
/// Deviation of a Gramian from the identity still counted as orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-12;
/// Points with `gap < GAP_REL_TOL · ‖X‖` are rejected as numerically off-manifold.
pub const GAP_REL_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub enum Core<T> {
    /// Core constrained to a fixed TT rank.
    Tt(TtTensor<T>),
    /// Plain Tucker: any core of full multilinear rank.
    Dense(DenseTensor<T>),
}

impl<T: Scalar> Core<T> {
    pub fn dims(&self) -> Vec<usize> {
        match self {
            Core::Tt(t) => t.dims(),
            Core::Dense(c) => c.dims().to_vec(),
        }
    }

    pub fn to_dense(&self) -> DenseTensor<T> {
        match self {
            Core::Tt(t) => t.to_dense(),
            Core::Dense(c) => c.clone(),
        }
    }

    pub fn tt_ranks(&self) -> Option<Vec<usize>> {
        match self {
            Core::Tt(t) => Some(t.ranks()),
            Core::Dense(_) => None,
        }
    }

    pub fn mode_multiply(&self, m: &Matrix<T>, mu: usize) -> Result<Self> {
        Ok(match self {
            Core::Tt(t) => Core::Tt(t.mode_multiply(m, mu)?),
            Core::Dense(c) => Core::Dense(c.mode_multiply(m, mu)?),
        })
    }

    pub fn scaled(&self, s: T) -> Self {
        match self {
            Core::Tt(t) => Core::Tt(t.scaled(s)),
            Core::Dense(c) => Core::Dense(c.scaled(s)),
        }
    }

    /// Same kind of core built from dense data, rounded to `ranks` if TT.
    pub fn like(&self, dense: &DenseTensor<T>) -> Result<(Self, T)> {
        match self {
            Core::Tt(t) => {
                let (tt, err) = TtTensor::from_dense(dense, &RankSpec::Fixed(t.ranks()))?;
                Ok((Core::Tt(tt), err))
            }
            Core::Dense(_) => Ok((Core::Dense(dense.clone()), T::zero())),
        }
    }
}

/// Target ranks of a manifold: outer multilinear ranks and, for a TT core,
/// its interior ranks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointRanks {
    pub outer: Vec<usize>,
    pub tt: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ManifoldPoint<T> {
    core: Core<T>,
    factors: Vec<Matrix<T>>,
    orthonormal: bool,
}

impl<T: Scalar> ManifoldPoint<T> {
    /// Validated point.
    ///
    /// Rejects singular factor Gramians, rank-deficient cores and points with
    /// boundary gap below `GAP_REL_TOL · ‖X‖`.
    pub fn new(core: Core<T>, factors: Vec<Matrix<T>>) -> Result<Self> {
        check_shapes(&core, &factors)?;
        for (mu, u) in factors.iter().enumerate() {
            if !u.is_finite() {
                return Err(Error::NonFinite);
            }
            let (vals, _) = sym_eig(&gram(u))?;
            let (lo, hi) = (vals[0], *vals.last().expect("nonempty"));
            if !(lo > T::tol(GRAM_RATIO_TOL) * hi) {
                return Err(Error::NotOnManifold(format!(
                    "factor {} has a singular Gramian",
                    mu + 1
                )));
            }
        }
        let p = Self::new_unchecked(core, factors);
        let ortho = p.orthonormalized()?;
        let spec = ortho.spectrum();
        let dims = ortho.core.dims();
        let total: usize = dims.iter().product();
        for (mu, s) in spec.tucker.iter().enumerate().filter(|_| dims.len() > 1) {
            if numerical_rank(s, dims[mu], total / dims[mu]) < dims[mu] {
                return Err(Error::NotOnManifold(format!(
                    "core is rank deficient in mode {}",
                    mu + 1
                )));
            }
        }
        if let Core::Tt(t) = &ortho.core {
            if let Err(e) = t.boundary_gap() {
                return Err(Error::NotOnManifold(e.to_string()));
            }
        }
        let gap = spec.min_value().unwrap_or_else(|| ortho.norm());
        if !(gap >= T::tol(GAP_REL_TOL) * ortho.norm()) || gap == T::zero() {
            return Err(Error::NotOnManifold(format!(
                "boundary gap {:e} is below the relative tolerance",
                gap.to_f64_lossy()
            )));
        }
        Ok(p)
    }

    /// Point without rank or conditioning validation. Shapes must still agree;
    /// panics otherwise.
    pub fn new_unchecked(core: Core<T>, factors: Vec<Matrix<T>>) -> Self {
        check_shapes(&core, &factors).expect("factor shapes match the core");
        let orthonormal = factors.iter().all(|u| {
            let g = gram(u);
            (&g - &Matrix::identity(g.rows())).max_abs() <= T::tol(ORTHONORMAL_TOL)
        });
        Self {
            core,
            factors,
            orthonormal,
        }
    }

    pub fn core(&self) -> &Core<T> {
        &self.core
    }

    pub fn factors(&self) -> &[Matrix<T>] {
        &self.factors
    }

    pub fn into_parts(self) -> (Core<T>, Vec<Matrix<T>>) {
        (self.core, self.factors)
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    /// Ambient mode sizes `N_μ`.
    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|u| u.rows()).collect()
    }

    /// Outer ranks `r_μ`.
    pub fn outer_ranks(&self) -> Vec<usize> {
        self.core.dims()
    }

    pub fn ranks(&self) -> PointRanks {
        PointRanks {
            outer: self.outer_ranks(),
            tt: self.core.tt_ranks(),
        }
    }

    pub fn core_dense(&self) -> DenseTensor<T> {
        self.core.to_dense()
    }

    /// `C ×₁ U¹ ⋯ ×_d U^d`.
    pub fn to_dense(&self) -> DenseTensor<T> {
        let mut x = self.core.to_dense();
        for (mu, u) in self.factors.iter().enumerate() {
            x = x.mode_multiply(u, mu).expect("shapes checked");
        }
        x
    }

    /// Same tensor with orthonormal factors: `U = QR`, core `C ×_μ R`.
    pub fn orthonormalized(&self) -> Result<Self> {
        if self.orthonormal {
            return Ok(self.clone());
        }
        let mut core = self.core.clone();
        let mut factors = Vec::with_capacity(self.order());
        for (mu, u) in self.factors.iter().enumerate() {
            let f = qr(u);
            core = core.mode_multiply(&f.r, mu)?;
            factors.push(f.q);
        }
        Ok(Self {
            core,
            factors,
            orthonormal: true,
        })
    }

    /// Frobenius norm of the represented tensor.
    pub fn norm(&self) -> T {
        if self.orthonormal {
            return self.core.to_dense().norm();
        }
        match self.orthonormalized() {
            Ok(p) => p.core.to_dense().norm(),
            Err(_) => self.to_dense().norm(),
        }
    }

    /// Tucker and TT spectra of the represented tensor.
    pub fn spectrum(&self) -> InterfaceSpectrum<T> {
        let p = if self.orthonormal {
            self.clone()
        } else {
            self.orthonormalized().expect("shapes checked")
        };
        let c = p.core.to_dense();
        let tucker = (0..c.order())
            .map(|mu| {
                if c.order() == 1 {
                    vec![c.norm()]
                } else {
                    svd(&c.unfold(mu).expect("mode exists"))
                        .expect("finite core")
                        .singular_values
                }
            })
            .collect();
        let tt = match &p.core {
            Core::Tt(t) => t.interface_spectrum().tt,
            Core::Dense(_) => Vec::new(),
        };
        InterfaceSpectrum { tucker, tt }
    }

    /// Smallest singular value over all Tucker and TT matricizations, an
    /// upper bound for the distance to the relative boundary.
    pub fn boundary_gap(&self) -> T {
        self.spectrum().min_value().unwrap_or_else(|| self.norm())
    }

    /// Scales the core; the result stays on the manifold for `s > 0`.
    pub fn scaled(&self, s: T) -> Self {
        Self {
            core: self.core.scaled(s),
            factors: self.factors.clone(),
            orthonormal: self.orthonormal,
        }
    }

    /// ST-HOSVD to the outer ranks followed by TT rounding of the core.
    /// Returns the retracted point and `‖x − retraction‖`.
    pub fn retract(x: &DenseTensor<T>, ranks: &PointRanks) -> Result<(Self, T)> {
        let d = x.order();
        if ranks.outer.len() != d {
            return Err(invalid("one outer rank per mode expected"));
        }
        let mut core = x.clone();
        let mut factors = Vec::with_capacity(d);
        for (mu, &r) in ranks.outer.iter().enumerate() {
            let u = if d == 1 {
                if r != x.dims()[0] {
                    return Err(invalid("order-1 points use the full space"));
                }
                Matrix::identity(r)
            } else {
                let s = svd(&core.unfold(mu)?)?;
                if r == 0 || r > s.singular_values.len() {
                    return Err(invalid(format!("outer rank {r} infeasible in mode {}", mu + 1)));
                }
                s.left_vectors.columns(0, r)
            };
            core = core.mode_multiply(&u.transpose(), mu)?;
            factors.push(u);
        }
        let core = match &ranks.tt {
            Some(k) => Core::Tt(TtTensor::from_dense(&core, &RankSpec::Fixed(k.clone()))?.0),
            None => Core::Dense(core),
        };
        let p = Self {
            core,
            factors,
            orthonormal: true,
        };
        let defect = x.sub(&p.to_dense())?.norm();
        Ok((p, defect))
    }

    /// `⟨X, Y⟩` through the cores: `⟨C_X, C_Y ×_μ (U_Xᵀ U_Y)⟩`.
    pub fn inner(&self, other: &Self) -> Result<T> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        let mut c = other.core.to_dense();
        for (mu, (a, b)) in self.factors.iter().zip(&other.factors).enumerate() {
            c = c.mode_multiply(&a.t_matmul(b), mu)?;
        }
        self.core.to_dense().inner(&c)
    }

    /// `X − Y` as a Tucker point with a block-diagonal core and the
    /// concatenated (then orthonormalized) factor bases. Ranks add up, so the
    /// result usually lies on a different manifold.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        let ca = self.core.to_dense();
        let cb = other.core.to_dense();
        let ra = ca.dims().to_vec();
        let rb = cb.dims().to_vec();
        let joint: Vec<usize> = ra.iter().zip(&rb).map(|(a, b)| a + b).collect();
        let mut block = DenseTensor::zeros(&joint)?;
        let mut idx = vec![0; joint.len()];
        for (lin, &v) in ca.data().iter().enumerate() {
            unravel(lin, &ra, &mut idx);
            block.set(&idx, v);
        }
        for (lin, &v) in cb.data().iter().enumerate() {
            unravel(lin, &rb, &mut idx);
            for (i, &o) in idx.iter_mut().zip(&ra) {
                *i += o;
            }
            block.set(&idx, -v);
        }
        let mut factors = Vec::with_capacity(joint.len());
        for (mu, (a, b)) in self.factors.iter().zip(&other.factors).enumerate() {
            let f = qr(&a.hcat(b));
            block = block.mode_multiply(&f.r, mu)?;
            factors.push(f.q);
        }
        Ok(Self {
            core: Core::Dense(block),
            factors,
            orthonormal: true,
        })
    }

    /// `‖X − Y‖` without cancellation, through [`Self::difference`].
    pub fn distance(&self, other: &Self) -> Result<T> {
        Ok(self.difference(other)?.core.to_dense().norm())
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ManifoldPoint<U> {
        let core = match &self.core {
            Core::Tt(t) => Core::Tt(t.cast()),
            Core::Dense(c) => Core::Dense(c.cast()),
        };
        ManifoldPoint {
            core,
            factors: self.factors.iter().map(|u| u.cast()).collect(),
            orthonormal: self.orthonormal,
        }
    }
}

/// Free-function form of [`ManifoldPoint::new`].
pub fn make_point<T: Scalar>(core: Core<T>, factors: Vec<Matrix<T>>) -> Result<ManifoldPoint<T>> {
    ManifoldPoint::new(core, factors)
}

/// Free-function form of [`ManifoldPoint::to_dense`].
pub fn point_to_dense<T: Scalar>(p: &ManifoldPoint<T>) -> DenseTensor<T> {
    p.to_dense()
}

fn check_shapes<T: Scalar>(core: &Core<T>, factors: &[Matrix<T>]) -> Result<()> {
    let r = core.dims();
    if r.len() != factors.len() {
        return Err(invalid(format!(
            "core has order {} but {} factors were given",
            r.len(),
            factors.len()
        )));
    }
    for (mu, (u, &rm)) in factors.iter().zip(&r).enumerate() {
        if u.cols() != rm {
            return Err(Error::DimensionMismatch {
                expected: vec![rm],
                found: vec![u.cols()],
            });
        }
        if u.rows() < u.cols() {
            return Err(invalid(format!(
                "factor {} has more columns than rows",
                mu + 1
            )));
        }
    }
    Ok(())
}

pub(crate) fn unravel(mut lin: usize, dims: &[usize], idx: &mut [usize]) {
    for (i, &n) in idx.iter_mut().zip(dims) {
        *i = lin % n;
        lin /= n;
    }
}
