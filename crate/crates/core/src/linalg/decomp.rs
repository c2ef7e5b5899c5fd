use serde::{Deserialize, Serialize};

use super::matrix::{dot, norm2, Matrix};
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

const MAX_JACOBI_SWEEPS: usize = 80;

/// Thin singular value decomposition `M = U diag(σ) Vᵀ`.
///
/// With `p = min(rows, cols)`, `left_vectors` is `rows × p`,
/// `right_vectors` is `cols × p` and `singular_values` has length `p`,
/// sorted nonincreasingly. Columns belonging to exactly zero singular values
/// are completed to an orthonormal set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SvdResult<T> {
    pub left_vectors: Matrix<T>,
    pub singular_values: Vec<T>,
    pub right_vectors: Matrix<T>,
}

impl<T: Scalar> SvdResult<T> {
    /// Numerical rank under [`numerical_rank`].
    pub fn rank(&self) -> usize {
        numerical_rank(
            &self.singular_values,
            self.left_vectors.rows(),
            self.right_vectors.rows(),
        )
    }

    pub fn reconstruct(&self) -> Matrix<T> {
        let mut us = self.left_vectors.clone();
        for (j, &s) in self.singular_values.iter().enumerate() {
            for v in us.col_mut(j) {
                *v *= s;
            }
        }
        us.matmul_t(&self.right_vectors)
    }

    /// Leading `k` singular triples.
    pub fn truncated(&self, k: usize) -> Self {
        let k = k.min(self.singular_values.len());
        Self {
            left_vectors: self.left_vectors.columns(0, k),
            singular_values: self.singular_values[..k].to_vec(),
            right_vectors: self.right_vectors.columns(0, k),
        }
    }

    /// `diag(σ) Vᵀ` restricted to the leading `k` triples.
    pub fn sigma_vt(&self, k: usize) -> Matrix<T> {
        let v = self.right_vectors.columns(0, k);
        Matrix::from_fn(k, v.rows(), |i, j| self.singular_values[i] * v[(j, i)])
    }
}

/// Number of singular values above `max(rows, cols) · ε · σ₁`.
pub fn numerical_rank<T: Scalar>(sigma: &[T], rows: usize, cols: usize) -> usize {
    let Some(&s1) = sigma.first() else { return 0 };
    if s1 == T::zero() {
        return 0;
    }
    let tol = T::from_count(rows.max(cols)) * T::epsilon() * s1;
    sigma.iter().filter(|&&s| s > tol).count()
}

/// Singular value decomposition by one-sided Jacobi rotations.
///
/// Errors on non-finite input.
pub fn svd<T: Scalar>(m: &Matrix<T>) -> Result<SvdResult<T>> {
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }
    if m.rows() < m.cols() {
        let t = svd_tall(&m.transpose());
        return Ok(SvdResult {
            left_vectors: t.right_vectors,
            singular_values: t.singular_values,
            right_vectors: t.left_vectors,
        });
    }
    Ok(svd_tall(m))
}

fn svd_tall<T: Scalar>(a: &Matrix<T>) -> SvdResult<T> {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = Matrix::<T>::identity(n);
    let eps = T::epsilon();

    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(w.col(p), w.col(p));
                let beta = dot(w.col(q), w.col(q));
                let gamma = dot(w.col(p), w.col(q));
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let sign = if zeta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (zeta.abs() + T::one().hypot(zeta));
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<T> = (0..n).map(|j| norm2(w.col(j))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));

    let s1 = order.first().map_or(T::zero(), |&j| norms[j]);
    let mut u = Matrix::zeros(m, n);
    let mut vs = Matrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    let mut completed = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        sigma.push(s);
        vs.col_mut(k).copy_from_slice(v.col(j));
        if s > T::zero() && s > s1 * eps * eps {
            for (dst, &src) in u.col_mut(k).iter_mut().zip(w.col(j)) {
                *dst = src / s;
            }
        } else {
            completed.push(k);
        }
    }
    for k in completed {
        complete_column(&mut u, k);
    }
    SvdResult {
        left_vectors: u,
        singular_values: sigma,
        right_vectors: vs,
    }
}

fn rotate_columns<T: Scalar>(a: &mut Matrix<T>, p: usize, q: usize, c: T, s: T) {
    let rows = a.rows();
    let data = a.data_mut();
    let (lo, hi) = data.split_at_mut(q * rows);
    let cp = &mut lo[p * rows..(p + 1) * rows];
    let cq = &mut hi[..rows];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills column `k` with a unit vector orthogonal to every other nonzero column.
fn complete_column<T: Scalar>(u: &mut Matrix<T>, k: usize) {
    let m = u.rows();
    let others: Vec<usize> = (0..u.cols())
        .filter(|&j| j != k && norm2(u.col(j)) > T::zero())
        .collect();
    let mut best: Option<Vec<T>> = None;
    let mut best_norm = T::zero();
    for e in 0..m {
        let mut x = vec![T::zero(); m];
        x[e] = T::one();
        for _ in 0..2 {
            for &j in &others {
                let c = dot(u.col(j), &x);
                for (xi, &uj) in x.iter_mut().zip(u.col(j)) {
                    *xi -= c * uj;
                }
            }
        }
        let nx = norm2(&x);
        if nx > best_norm {
            best_norm = nx;
            best = Some(x);
        }
        if best_norm > T::of(0.5) {
            break;
        }
    }
    if let Some(x) = best {
        for (dst, xi) in u.col_mut(k).iter_mut().zip(x) {
            *dst = xi / best_norm;
        }
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as columns. Only the symmetric part of `a` is used.
pub fn sym_eig<T: Scalar>(a: &Matrix<T>) -> Result<(Vec<T>, Matrix<T>)> {
    if a.rows() != a.cols() {
        return Err(invalid("eigendecomposition needs a square matrix"));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    let n = a.rows();
    let mut s = a.symmetrized();
    let mut v = Matrix::<T>::identity(n);
    let scale = s.frobenius_norm();
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut off = T::zero();
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    off += s[(i, j)] * s[(i, j)];
                }
            }
        }
        if off.sqrt() <= T::epsilon() * scale * T::of(0.1) || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = s[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (s[(q, q)] - s[(p, p)]) / (apq + apq);
                let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (theta.abs() + T::one().hypot(theta));
                let c = T::one() / (T::one() + t * t).sqrt();
                let sn = c * t;
                rotate_columns(&mut s, p, q, c, sn);
                for k in 0..n {
                    let (x, y) = (s[(p, k)], s[(q, k)]);
                    s[(p, k)] = c * x - sn * y;
                    s[(q, k)] = sn * x + c * y;
                }
                s[(p, q)] = T::zero();
                s[(q, p)] = T::zero();
                rotate_columns(&mut v, p, q, c, sn);
            }
        }
    }
    let vals = s.diag();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).expect("finite eigenvalues"));
    let sorted: Vec<T> = order.iter().map(|&i| vals[i]).collect();
    let mut vecs = Matrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vecs.col_mut(k).copy_from_slice(v.col(i));
    }
    Ok((sorted, vecs))
}

/// Householder QR with nonnegative diagonal in `R`.
#[derive(Clone, Debug)]
pub struct Qr<T> {
    /// `rows × min(rows, cols)`, orthonormal columns.
    pub q: Matrix<T>,
    /// `min(rows, cols) × cols`, upper triangular.
    pub r: Matrix<T>,
}

struct Reflectors<T> {
    vs: Vec<Vec<T>>,
    r: Matrix<T>,
}

fn householder<T: Scalar>(a: &Matrix<T>) -> Reflectors<T> {
    let (m, n) = a.shape();
    let p = m.min(n);
    let mut r = a.clone();
    let mut vs = Vec::with_capacity(p);
    for k in 0..p {
        let mut v: Vec<T> = (k..m).map(|i| r[(i, k)]).collect();
        let nx = norm2(&v);
        if nx == T::zero() {
            vs.push(Vec::new());
            continue;
        }
        let alpha = if v[0] >= T::zero() { -nx } else { nx };
        v[0] -= alpha;
        let nv = norm2(&v);
        if nv == T::zero() {
            vs.push(Vec::new());
            continue;
        }
        for x in v.iter_mut() {
            *x /= nv;
        }
        for j in k..n {
            let mut c = T::zero();
            for (i, &vi) in v.iter().enumerate() {
                c += vi * r[(k + i, j)];
            }
            c += c;
            for (i, &vi) in v.iter().enumerate() {
                r[(k + i, j)] -= c * vi;
            }
        }
        vs.push(v);
    }
    Reflectors { vs, r }
}

fn apply_reflectors<T: Scalar>(vs: &[Vec<T>], q: &mut Matrix<T>) {
    for (k, v) in vs.iter().enumerate().rev() {
        if v.is_empty() {
            continue;
        }
        for j in 0..q.cols() {
            let mut c = T::zero();
            for (i, &vi) in v.iter().enumerate() {
                c += vi * q[(k + i, j)];
            }
            c += c;
            for (i, &vi) in v.iter().enumerate() {
                q[(k + i, j)] -= c * vi;
            }
        }
    }
}

/// Thin QR factorization.
pub fn qr<T: Scalar>(a: &Matrix<T>) -> Qr<T> {
    let (m, n) = a.shape();
    let p = m.min(n);
    let refl = householder(a);
    let mut q = Matrix::from_fn(m, p, |i, j| if i == j { T::one() } else { T::zero() });
    apply_reflectors(&refl.vs, &mut q);
    let mut r = Matrix::from_fn(p, n, |i, j| if i <= j { refl.r[(i, j)] } else { T::zero() });
    for k in 0..p {
        if r[(k, k)] < T::zero() {
            for j in 0..n {
                r[(k, j)] = -r[(k, j)];
            }
            for x in q.col_mut(k) {
                *x = -*x;
            }
        }
    }
    Qr { q, r }
}

/// Orthonormal basis of the orthogonal complement of the column span of `u`,
/// which must have orthonormal columns. Result is `rows × (rows − cols)`.
pub fn orthonormal_complement<T: Scalar>(u: &Matrix<T>) -> Matrix<T> {
    let (m, r) = u.shape();
    if r >= m {
        return Matrix::zeros(m, 0);
    }
    let refl = householder(u);
    let mut q = Matrix::from_fn(m, m - r, |i, j| if i == j + r { T::one() } else { T::zero() });
    apply_reflectors(&refl.vs, &mut q);
    q
}

/// Lower-triangular Cholesky factor `L` with `a = L Lᵀ`.
pub fn cholesky<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(invalid("cholesky needs a square matrix"));
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return Err(Error::Solver(format!(
                "matrix is not positive definite (pivot {j})"
            )));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L X = B` for lower-triangular `L`.
pub fn solve_lower<T: Scalar>(l: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let n = l.rows();
    assert_eq!(b.rows(), n, "solve_lower shape mismatch");
    let mut x = b.clone();
    for c in 0..b.cols() {
        let col = x.col_mut(c);
        for i in 0..n {
            let mut s = col[i];
            for k in 0..i {
                s -= l[(i, k)] * col[k];
            }
            col[i] = s / l[(i, i)];
        }
    }
    x
}

/// Solves `Lᵀ X = B` for lower-triangular `L`.
pub fn solve_lower_transpose<T: Scalar>(l: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let n = l.rows();
    assert_eq!(b.rows(), n, "solve_lower_transpose shape mismatch");
    let mut x = b.clone();
    for c in 0..b.cols() {
        let col = x.col_mut(c);
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in i + 1..n {
                s -= l[(k, i)] * col[k];
            }
            col[i] = s / l[(i, i)];
        }
    }
    x
}

/// Solves `A X = B` for symmetric positive definite `A`.
pub fn spd_solve<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    let l = cholesky(a)?;
    Ok(solve_lower_transpose(&l, &solve_lower(&l, b)))
}

/// `uᵀ u`.
pub fn gram<T: Scalar>(u: &Matrix<T>) -> Matrix<T> {
    u.t_matmul(u)
}

/// Largest singular value.
pub fn spectral_norm<T: Scalar>(m: &Matrix<T>) -> Result<T> {
    if m.rows() == 0 || m.cols() == 0 {
        return Ok(T::zero());
    }
    Ok(svd(m)?.singular_values[0])
}

/// `a^{-1/2}` for symmetric positive definite `a`.
pub fn inv_sqrt_spd<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let (vals, vecs) = sym_eig(a)?;
    if vals.iter().any(|&v| !(v > T::zero())) {
        return Err(Error::Solver("matrix is not positive definite".into()));
    }
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let s = T::one() / v.sqrt();
        for x in scaled.col_mut(j) {
            *x *= s;
        }
    }
    Ok(scaled.matmul_t(&vecs))
}

/// Ratio of extreme eigenvalues of a symmetric matrix; infinite when the
/// smallest is not positive.
pub fn spd_condition<T: Scalar>(a: &Matrix<T>) -> Result<T> {
    let (vals, _) = sym_eig(a)?;
    match (vals.first(), vals.last()) {
        (Some(&lo), Some(&hi)) if lo > T::zero() => Ok(hi / lo),
        (Some(_), Some(_)) => Ok(T::infinity()),
        _ => Ok(T::one()),
    }
}
