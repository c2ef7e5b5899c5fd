//! Tensor trains `X(i₁,…,i_d) = G₁(i₁) G₂(i₂) ⋯ G_d(i_d)`.
//!
//! Core `μ` is stored as a [`DenseTensor`] of shape `k_{μ−1} × N_μ × k_μ`
//! with `k₀ = k_d = 1`. Because of the column-major layout its left unfolding
//! (`k_{μ−1} N_μ × k_μ`) and right unfolding (`k_{μ−1} × N_μ k_μ`) are plain
//! reshapes.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{numerical_rank, qr, svd, Matrix};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;

/// Orthogonality bookkeeping of a [`TtTensor`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrthoState {
    None,
    /// Cores before the site are left-orthogonal, cores after it right-orthogonal.
    Centered(usize),
}

/// How [`TtTensor::from_dense`] picks interface ranks.
#[derive(Clone, Debug, PartialEq)]
pub enum RankSpec<T> {
    /// Numerical rank of every unfolding.
    Exact,
    /// Prescribed ranks `(k₁, …, k_{d−1})`.
    Fixed(Vec<usize>),
    /// Smallest ranks with relative Frobenius error at most the tolerance.
    Tolerance(T),
}

/// Singular values per split, nonincreasing within each list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct InterfaceSpectrum<T> {
    /// Mode-`μ` matricizations of a Tucker point, one list per mode. Empty for
    /// a bare tensor train.
    pub tucker: Vec<Vec<T>>,
    /// Prefix matricizations `{1..μ}` for `μ = 1, …, d−1`.
    pub tt: Vec<Vec<T>>,
}

impl<T: Scalar> InterfaceSpectrum<T> {
    /// Smallest listed value, `None` if nothing is listed.
    pub fn min_value(&self) -> Option<T> {
        self.tucker
            .iter()
            .chain(&self.tt)
            .filter_map(|s| s.last().copied())
            .reduce(T::min)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TtTensor<T> {
    cores: Vec<DenseTensor<T>>,
    ortho: OrthoState,
}

impl<T: Scalar> TtTensor<T> {
    /// Validates interface sizes and boundary ranks.
    pub fn new(cores: Vec<DenseTensor<T>>) -> Result<Self> {
        if cores.is_empty() {
            return Err(invalid("a tensor train needs at least one core"));
        }
        let d = cores.len();
        for (mu, c) in cores.iter().enumerate() {
            if c.order() != 3 {
                return Err(invalid(format!("core {mu} must have order 3")));
            }
            let dims = c.dims();
            if mu == 0 && dims[0] != 1 {
                return Err(invalid("first core must have left rank 1"));
            }
            if mu == d - 1 && dims[2] != 1 {
                return Err(invalid("last core must have right rank 1"));
            }
            if mu > 0 && cores[mu - 1].dims()[2] != dims[0] {
                return Err(Error::DimensionMismatch {
                    expected: vec![cores[mu - 1].dims()[2]],
                    found: vec![dims[0]],
                });
            }
        }
        Ok(Self {
            cores,
            ortho: OrthoState::None,
        })
    }

    pub fn cores(&self) -> &[DenseTensor<T>] {
        &self.cores
    }

    pub fn into_cores(self) -> Vec<DenseTensor<T>> {
        self.cores
    }

    pub fn ortho_state(&self) -> OrthoState {
        self.ortho
    }

    pub fn order(&self) -> usize {
        self.cores.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.dims()[1]).collect()
    }

    /// Interior ranks `(k₁, …, k_{d−1})`.
    pub fn ranks(&self) -> Vec<usize> {
        self.cores[..self.order() - 1]
            .iter()
            .map(|c| c.dims()[2])
            .collect()
    }

    /// Number of parameters in all cores.
    pub fn num_params(&self) -> usize {
        self.cores.iter().map(|c| c.len()).sum()
    }

    /// Rank-1 train from one vector per mode.
    pub fn rank_one(vectors: &[&[T]]) -> Result<Self> {
        let cores = vectors
            .iter()
            .map(|v| DenseTensor::new(vec![1, v.len(), 1], v.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(cores)
    }

    /// Train of `Σ_t w_t v_t¹ ⊗ … ⊗ v_t^d` with block-diagonal cores, so the
    /// ranks equal the number of terms. No terms give the zero rank-1 train.
    pub fn from_cp_terms(dims: &[usize], terms: &[(T, Vec<Vec<T>>)]) -> Result<Self> {
        let d = dims.len();
        if d == 0 {
            return Err(invalid("at least one mode expected"));
        }
        for (_, vecs) in terms {
            if vecs.len() != d || vecs.iter().zip(dims).any(|(v, &n)| v.len() != n) {
                return Err(invalid("CP term does not match the dims"));
            }
        }
        if terms.is_empty() {
            let zeros: Vec<Vec<T>> = dims.iter().map(|&n| vec![T::zero(); n]).collect();
            let refs: Vec<&[T]> = zeros.iter().map(|v| v.as_slice()).collect();
            return Self::rank_one(&refs);
        }
        let r = terms.len();
        let mut cores = Vec::with_capacity(d);
        for (mu, &n) in dims.iter().enumerate() {
            let left = if mu == 0 { 1 } else { r };
            let right = if mu + 1 == d { 1 } else { r };
            let mut core = DenseTensor::zeros(&[left, n, right])?;
            for (t, (w, vecs)) in terms.iter().enumerate() {
                let (a, b) = (if left == 1 { 0 } else { t }, if right == 1 { 0 } else { t });
                let scale = if mu == 0 { *w } else { T::one() };
                for i in 0..n {
                    let old = core.get(&[a, i, b]);
                    core.set(&[a, i, b], old + scale * vecs[mu][i]);
                }
            }
            cores.push(core);
        }
        Self::new(cores)
    }

    /// Scales the first core.
    pub fn scaled(&self, s: T) -> Self {
        let mut out = self.clone();
        out.cores[0].scale_mut(s);
        if s < T::zero() {
            out.ortho = OrthoState::None;
        }
        out
    }

    /// TT-SVD sweep. Returns the train and the Frobenius error of the
    /// truncation, which is exact because the discarded parts are orthogonal.
    pub fn from_dense(x: &DenseTensor<T>, ranks: &RankSpec<T>) -> Result<(Self, T)> {
        let dims = x.dims().to_vec();
        let d = dims.len();
        if let RankSpec::Fixed(k) = ranks {
            check_feasible(&dims, k)?;
        }
        if d == 1 {
            let core = DenseTensor::new(vec![1, dims[0], 1], x.data().to_vec())?;
            return Ok((Self::new(vec![core])?, T::zero()));
        }
        let norm = x.norm();
        let mut cores = Vec::with_capacity(d);
        let mut rest = Matrix::from_col_major(dims[0], x.len() / dims[0], x.data().to_vec())?;
        let mut k_prev = 1;
        let mut err2 = T::zero();
        for mu in 0..d - 1 {
            let rows = k_prev * dims[mu];
            let cols = rest.data().len() / rows;
            let m = rest.reshape(rows, cols)?;
            let s = svd(&m)?;
            let avail = s.singular_values.len();
            let k = match ranks {
                RankSpec::Exact => numerical_rank(&s.singular_values, rows, cols).max(1),
                RankSpec::Fixed(k) => {
                    if k[mu] > avail {
                        return Err(invalid(format!(
                            "rank {} at interface {} exceeds the unfolding size {avail}",
                            k[mu],
                            mu + 1
                        )));
                    }
                    k[mu]
                }
                RankSpec::Tolerance(tol) => {
                    let budget = *tol * *tol * norm * norm / T::from_count(d - 1);
                    tolerance_rank(&s.singular_values, budget)
                }
            };
            for &sv in &s.singular_values[k..] {
                err2 += sv * sv;
            }
            let u = s.left_vectors.columns(0, k);
            cores.push(DenseTensor::new(vec![k_prev, dims[mu], k], u.into_data())?);
            rest = s.sigma_vt(k);
            k_prev = k;
        }
        cores.push(DenseTensor::new(
            vec![k_prev, dims[d - 1], 1],
            rest.into_data(),
        )?);
        let mut t = Self::new(cores)?;
        t.ortho = OrthoState::Centered(d - 1);
        Ok((t, err2.sqrt()))
    }

    /// Full tensor by successive core contraction.
    pub fn to_dense(&self) -> DenseTensor<T> {
        let dims = self.dims();
        let first = &self.cores[0];
        let mut acc = Matrix::from_col_major(dims[0], first.dims()[2], first.data().to_vec())
            .expect("core shape");
        for core in &self.cores[1..] {
            let right = right_unfolding(core);
            let prod = acc.matmul(&right);
            let rows = prod.rows() * core.dims()[1];
            acc = prod.reshape(rows, core.dims()[2]).expect("reshape");
        }
        DenseTensor::new(dims, acc.into_data()).expect("dense shape")
    }

    /// Single entry as a product of core slices.
    pub fn element(&self, idx: &[usize]) -> T {
        let mut row = vec![T::one()];
        for (core, &i) in self.cores.iter().zip(idx) {
            let (kl, _, kr) = (core.dims()[0], core.dims()[1], core.dims()[2]);
            let mut next = vec![T::zero(); kr];
            for (b, nb) in next.iter_mut().enumerate() {
                for (a, &ra) in row.iter().enumerate().take(kl) {
                    *nb += ra * core.get(&[a, i, b]);
                }
            }
            row = next;
        }
        row[0]
    }

    /// QR sweeps making cores before `site` left-orthogonal and cores after it
    /// right-orthogonal. The represented tensor is unchanged.
    pub fn orthogonalize(&self, site: usize) -> Result<Self> {
        let d = self.order();
        if site >= d {
            return Err(invalid(format!("site {site} out of range for order {d}")));
        }
        let mut cores = self.cores.clone();
        for mu in 0..site {
            let (q, r) = left_qr(&cores[mu]);
            cores[mu] = q;
            cores[mu + 1] = absorb_left(&r, &cores[mu + 1]);
        }
        for mu in (site + 1..d).rev() {
            let (l, q) = right_lq(&cores[mu]);
            cores[mu] = q;
            cores[mu - 1] = absorb_right(&cores[mu - 1], &l);
        }
        Ok(Self {
            cores,
            ortho: OrthoState::Centered(site),
        })
    }

    /// Frobenius norm via orthogonalization.
    pub fn norm(&self) -> T {
        match self.ortho {
            OrthoState::Centered(s) => self.cores[s].norm(),
            OrthoState::None => {
                let t = self.orthogonalize(0).expect("site 0 exists");
                t.cores[0].norm()
            }
        }
    }

    /// Singular values of every prefix matricization `{1..μ}`, `μ < d`.
    ///
    /// List `μ` has length `k_μ`, padded with zeros when the unfolding is
    /// smaller than the rank.
    pub fn interface_spectrum(&self) -> InterfaceSpectrum<T> {
        let d = self.order();
        let mut tt = Vec::with_capacity(d.saturating_sub(1));
        if d > 1 {
            let mut cores = self.orthogonalize(0).expect("site 0 exists").cores;
            for mu in 0..d - 1 {
                let s = svd(&left_unfolding(&cores[mu])).expect("finite cores");
                let k = cores[mu].dims()[2];
                let mut sv = s.singular_values.clone();
                sv.resize(k, T::zero());
                tt.push(sv);
                let p = s.singular_values.len();
                let (kl, n) = (cores[mu].dims()[0], cores[mu].dims()[1]);
                cores[mu] = DenseTensor::new(vec![kl, n, p], s.left_vectors.into_data())
                    .expect("core shape");
                let svt = Matrix::from_fn(p, k, |i, j| {
                    s.singular_values[i] * s.right_vectors[(j, i)]
                });
                cores[mu + 1] = absorb_left(&svt, &cores[mu + 1]);
            }
        }
        InterfaceSpectrum {
            tucker: Vec::new(),
            tt,
        }
    }

    /// `min_μ σ^μ_{k_μ}` over the interfaces.
    ///
    /// For `d = 1` there are no interfaces and the norm is returned (the only
    /// boundary point of a nonzero vector space is the origin). Errors with
    /// [`Error::Degenerate`] when some interface rank is numerically deficient.
    pub fn boundary_gap(&self) -> Result<T> {
        if self.order() == 1 {
            let n = self.norm();
            if n == T::zero() {
                return Err(Error::Degenerate {
                    interface: 0,
                    value: 0.0,
                });
            }
            return Ok(n);
        }
        let spec = self.interface_spectrum();
        let dims = self.dims();
        let total: usize = dims.iter().product();
        let mut gap = T::infinity();
        for (mu, s) in spec.tt.iter().enumerate() {
            let rows: usize = dims[..=mu].iter().product();
            let rank = numerical_rank(s, rows, total / rows);
            let last = *s.last().expect("interface rank at least 1");
            if rank < s.len() {
                return Err(Error::Degenerate {
                    interface: mu + 1,
                    value: last.to_f64_lossy(),
                });
            }
            gap = gap.min(last);
        }
        Ok(gap)
    }

    /// Removes the smallest singular triple of the prefix matricization after
    /// interface `mu` (0-based, `mu < d − 1`). Ranks are kept, so the result
    /// lies in the closure of the manifold with interface rank `k_μ − 1`.
    pub fn truncate_interface(&self, mu: usize) -> Result<Self> {
        let d = self.order();
        if mu + 1 >= d {
            return Err(invalid(format!("interface {mu} out of range for order {d}")));
        }
        let mut t = self.orthogonalize(mu)?;
        let core = &t.cores[mu];
        let s = svd(&left_unfolding(core))?;
        let mut sv = s.singular_values.clone();
        let k = core.dims()[2];
        if sv.len() == k {
            *sv.last_mut().expect("nonempty") = T::zero();
        }
        let trimmed = crate::linalg::SvdResult {
            left_vectors: s.left_vectors,
            singular_values: sv,
            right_vectors: s.right_vectors,
        };
        let m = trimmed.reconstruct();
        t.cores[mu] = DenseTensor::new(core.dims().to_vec(), m.into_data())?;
        t.ortho = OrthoState::None;
        Ok(t)
    }

    /// SVD-based rounding to the given ranks; returns the rounded train and the
    /// Frobenius truncation error.
    pub fn round(&self, ranks: &[usize]) -> Result<(Self, T)> {
        let d = self.order();
        if ranks.len() + 1 != d {
            return Err(invalid(format!("expected {} ranks, got {}", d - 1, ranks.len())));
        }
        check_feasible(&self.dims(), ranks)?;
        let mut cores = self.orthogonalize(d - 1)?.cores;
        let mut err2 = T::zero();
        for mu in (1..d).rev() {
            let right = right_unfolding(&cores[mu]);
            let s = svd(&right)?;
            let k = ranks[mu - 1];
            if k > s.singular_values.len() {
                return Err(invalid(format!(
                    "rank {k} at interface {mu} exceeds the current rank {}",
                    s.singular_values.len()
                )));
            }
            for &sv in &s.singular_values[k..] {
                err2 += sv * sv;
            }
            let vt = s.right_vectors.columns(0, k).transpose();
            let (n, kr) = (cores[mu].dims()[1], cores[mu].dims()[2]);
            cores[mu] = DenseTensor::new(vec![k, n, kr], vt.into_data())?;
            let mut us = s.left_vectors.columns(0, k);
            for j in 0..k {
                let sj = s.singular_values[j];
                for v in us.col_mut(j) {
                    *v *= sj;
                }
            }
            cores[mu - 1] = absorb_right(&cores[mu - 1], &us);
        }
        Ok((
            Self {
                cores,
                ortho: OrthoState::Centered(0),
            },
            err2.sqrt(),
        ))
    }

    /// Multiplies `m` onto the physical mode of core `mu`.
    pub fn mode_multiply(&self, m: &Matrix<T>, mu: usize) -> Result<Self> {
        if mu >= self.order() {
            return Err(invalid(format!("mode {mu} out of range")));
        }
        let mut cores = self.cores.clone();
        cores[mu] = cores[mu].mode_multiply(m, 1)?;
        Ok(Self {
            cores,
            ortho: OrthoState::None,
        })
    }

    /// Replaces core `mu`, keeping its shape.
    pub fn with_core(&self, mu: usize, core: DenseTensor<T>) -> Result<Self> {
        if self.cores.get(mu).map(|c| c.dims()) != Some(core.dims()) {
            return Err(invalid("replacement core has the wrong shape"));
        }
        let mut cores = self.cores.clone();
        cores[mu] = core;
        Ok(Self {
            cores,
            ortho: OrthoState::None,
        })
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> TtTensor<U> {
        TtTensor {
            cores: self.cores.iter().map(|c| c.cast()).collect(),
            ortho: self.ortho,
        }
    }
}

/// Checks `k_μ ≤ min(∏_{ν≤μ} N_ν, ∏_{ν>μ} N_ν)` and the local conditions
/// `k_μ ≤ k_{μ−1} N_μ`, `k_{μ−1} ≤ N_μ k_μ`.
pub fn check_feasible(dims: &[usize], ranks: &[usize]) -> Result<()> {
    let d = dims.len();
    if ranks.len() + 1 != d {
        return Err(invalid(format!("expected {} ranks, got {}", d - 1, ranks.len())));
    }
    let full: Vec<usize> = std::iter::once(1)
        .chain(ranks.iter().copied())
        .chain(std::iter::once(1))
        .collect();
    for mu in 0..d - 1 {
        let left: usize = dims[..=mu].iter().product();
        let right: usize = dims[mu + 1..].iter().product();
        let k = ranks[mu];
        if k == 0 || k > left.min(right) {
            return Err(invalid(format!(
                "rank {k} at interface {} is infeasible for dims {dims:?}",
                mu + 1
            )));
        }
    }
    for mu in 0..d {
        if full[mu + 1] > full[mu] * dims[mu] || full[mu] > dims[mu] * full[mu + 1] {
            return Err(invalid(format!(
                "ranks {ranks:?} are inconsistent at core {}",
                mu + 1
            )));
        }
    }
    Ok(())
}

/// Largest ranks admissible for the dims: `min(∏_{ν≤μ} N_ν, ∏_{ν>μ} N_ν)`.
pub fn maximal_ranks(dims: &[usize]) -> Vec<usize> {
    (0..dims.len().saturating_sub(1))
        .map(|mu| {
            let left: usize = dims[..=mu].iter().product();
            let right: usize = dims[mu + 1..].iter().product();
            left.min(right)
        })
        .collect()
}

fn tolerance_rank<T: Scalar>(sigma: &[T], budget: T) -> usize {
    let mut tail = T::zero();
    let mut k = sigma.len();
    while k > 1 {
        let s = sigma[k - 1];
        if tail + s * s > budget {
            break;
        }
        tail += s * s;
        k -= 1;
    }
    k
}

pub(crate) fn left_unfolding<T: Scalar>(core: &DenseTensor<T>) -> Matrix<T> {
    let d = core.dims();
    Matrix::from_col_major(d[0] * d[1], d[2], core.data().to_vec()).expect("core shape")
}

pub(crate) fn right_unfolding<T: Scalar>(core: &DenseTensor<T>) -> Matrix<T> {
    let d = core.dims();
    Matrix::from_col_major(d[0], d[1] * d[2], core.data().to_vec()).expect("core shape")
}

fn left_qr<T: Scalar>(core: &DenseTensor<T>) -> (DenseTensor<T>, Matrix<T>) {
    let d = core.dims();
    let f = qr(&left_unfolding(core));
    let p = f.q.cols();
    (
        DenseTensor::new(vec![d[0], d[1], p], f.q.into_data()).expect("core shape"),
        f.r,
    )
}

fn right_lq<T: Scalar>(core: &DenseTensor<T>) -> (Matrix<T>, DenseTensor<T>) {
    let d = core.dims();
    let f = qr(&right_unfolding(core).transpose());
    let p = f.q.cols();
    let q = f.q.transpose();
    (
        f.r.transpose(),
        DenseTensor::new(vec![p, d[1], d[2]], q.into_data()).expect("core shape"),
    )
}

/// `r · core` along the left rank index.
fn absorb_left<T: Scalar>(r: &Matrix<T>, core: &DenseTensor<T>) -> DenseTensor<T> {
    let d = core.dims();
    let m = r.matmul(&right_unfolding(core));
    DenseTensor::new(vec![r.rows(), d[1], d[2]], m.into_data()).expect("core shape")
}

/// `core · l` along the right rank index.
fn absorb_right<T: Scalar>(core: &DenseTensor<T>, l: &Matrix<T>) -> DenseTensor<T> {
    let d = core.dims();
    let m = left_unfolding(core).matmul(l);
    DenseTensor::new(vec![d[0], d[1], l.cols()], m.into_data()).expect("core shape")
}
