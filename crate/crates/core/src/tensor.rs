//! Dense d-way arrays.
//!
//! Storage is column-major: mode 1 varies fastest, so entry `(i₁, …, i_d)`
//! sits at `i₁ + N₁ (i₂ + N₂ (i₃ + …))`. A matricization lists the row modes
//! and column modes each in increasing mode order with the earlier mode
//! fastest, which makes the prefix split `{1, …, μ}` a plain reshape.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm2, Matrix};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "RawTensor<T>")]
pub struct DenseTensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct RawTensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> TryFrom<RawTensor<T>> for DenseTensor<T> {
    type Error = Error;

    fn try_from(raw: RawTensor<T>) -> Result<Self> {
        Self::new(raw.dims, raw.data)
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() {
        return Err(invalid("a tensor needs at least one mode"));
    }
    if dims.contains(&0) {
        return Err(invalid(format!("mode sizes must be positive, got {dims:?}")));
    }
    Ok(())
}

impl<T: Scalar> DenseTensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        check_dims(&dims)?;
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(Error::DimensionMismatch {
                expected: vec![n],
                found: vec![data.len()],
            });
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![T::zero(); dims.iter().product()],
        })
    }

    /// Fills entries from a function of the multi-index.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> T) -> Result<Self> {
        check_dims(dims)?;
        let n: usize = dims.iter().product();
        let mut idx = vec![0usize; dims.len()];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f(&idx));
            increment(&mut idx, dims);
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    /// `a₁ ⊗ a₂ ⊗ … ⊗ a_d`.
    pub fn outer(vectors: &[&[T]]) -> Result<Self> {
        let dims: Vec<usize> = vectors.iter().map(|v| v.len()).collect();
        Self::from_fn(&dims, |idx| {
            idx.iter()
                .zip(vectors)
                .fold(T::one(), |p, (&i, v)| p * v[i])
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut lin = 0;
        for (&i, &n) in idx.iter().zip(&self.dims).rev() {
            debug_assert!(i < n);
            lin = lin * n + i;
        }
        lin
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.linear_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: T) {
        let lin = self.linear_index(idx);
        self.data[lin] = v;
    }

    pub fn norm(&self) -> T {
        norm2(&self.data)
    }

    pub fn inner(&self, other: &Self) -> Result<T> {
        self.same_dims(other)?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn same_dims(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims.clone(),
                found: other.dims.clone(),
            });
        }
        Ok(())
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn scale_mut(&mut self, s: T) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: T, other: &Self) -> Result<()> {
        self.same_dims(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(T::one(), other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(-T::one(), other)?;
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.same_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(self, dims: &[usize]) -> Result<Self> {
        Self::new(dims.to_vec(), self.data)
    }

    /// Matricization with the listed modes (0-based, any order) as rows.
    ///
    /// The split must be a nonempty proper subset of the modes.
    pub fn matricize(&self, split: &[usize]) -> Result<Matrix<T>> {
        let (rows_modes, col_modes) = split_modes(self.order(), split)?;
        if is_prefix(&rows_modes) {
            let rows: usize = self.dims[..rows_modes.len()].iter().product();
            return Matrix::from_col_major(rows, self.len() / rows, self.data.clone());
        }
        let (rs, cs) = self.split_strides(&rows_modes, &col_modes);
        let rows: usize = rows_modes.iter().map(|&m| self.dims[m]).product();
        let cols = self.len() / rows;
        let mut out = Matrix::zeros(rows, cols);
        let mut idx = vec![0usize; self.order()];
        let out_data = out.data_mut();
        for &v in &self.data {
            let r: usize = rows_modes.iter().zip(&rs).map(|(&m, &s)| idx[m] * s).sum();
            let c: usize = col_modes.iter().zip(&cs).map(|(&m, &s)| idx[m] * s).sum();
            out_data[r + rows * c] = v;
            increment(&mut idx, &self.dims);
        }
        Ok(out)
    }

    /// Mode-`mu` matricization: `N_μ` rows, remaining modes as columns.
    pub fn unfold(&self, mu: usize) -> Result<Matrix<T>> {
        if mu >= self.order() {
            return Err(invalid(format!("mode {mu} out of range")));
        }
        let left: usize = self.dims[..mu].iter().product();
        let n = self.dims[mu];
        let right: usize = self.dims[mu + 1..].iter().product();
        let mut out = Matrix::zeros(n, left * right);
        for r in 0..right {
            for i in 0..n {
                for l in 0..left {
                    out[(i, l + left * r)] = self.data[l + left * (i + n * r)];
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`DenseTensor::matricize`].
    pub fn tensorize(m: &Matrix<T>, dims: &[usize], split: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        let (rows_modes, col_modes) = split_modes(dims.len(), split)?;
        let rows: usize = rows_modes.iter().map(|&k| dims[k]).product();
        let total: usize = dims.iter().product();
        if m.rows() != rows || m.cols() * rows != total {
            return Err(Error::DimensionMismatch {
                expected: vec![rows, total / rows],
                found: vec![m.rows(), m.cols()],
            });
        }
        let shell = Self {
            dims: dims.to_vec(),
            data: Vec::new(),
        };
        let (rs, cs) = shell.split_strides(&rows_modes, &col_modes);
        let mut data = Vec::with_capacity(total);
        let mut idx = vec![0usize; dims.len()];
        for _ in 0..total {
            let r: usize = rows_modes.iter().zip(&rs).map(|(&k, &s)| idx[k] * s).sum();
            let c: usize = col_modes.iter().zip(&cs).map(|(&k, &s)| idx[k] * s).sum();
            data.push(m[(r, c)]);
            increment(&mut idx, dims);
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    /// Inverse of [`DenseTensor::unfold`].
    pub fn fold(m: &Matrix<T>, dims: &[usize], mu: usize) -> Result<Self> {
        Self::tensorize(m, dims, &[mu])
    }

    fn split_strides(&self, rows_modes: &[usize], col_modes: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let strides = |modes: &[usize]| {
            let mut s = Vec::with_capacity(modes.len());
            let mut acc = 1;
            for &m in modes {
                s.push(acc);
                acc *= self.dims[m];
            }
            s
        };
        (strides(rows_modes), strides(col_modes))
    }

    /// Multiplies matrix `m` onto mode `mu`: the mode size `N_μ` becomes `m.rows()`.
    pub fn mode_multiply(&self, m: &Matrix<T>, mu: usize) -> Result<Self> {
        if mu >= self.order() {
            return Err(invalid(format!("mode {mu} out of range")));
        }
        let n = self.dims[mu];
        if m.cols() != n {
            return Err(Error::DimensionMismatch {
                expected: vec![n],
                found: vec![m.cols()],
            });
        }
        let nr = m.rows();
        if nr == 0 {
            return Err(invalid("mode product would create an empty mode"));
        }
        let left: usize = self.dims[..mu].iter().product();
        let right: usize = self.dims[mu + 1..].iter().product();
        let mut dims = self.dims.clone();
        dims[mu] = nr;
        let mut out = vec![T::zero(); left * nr * right];
        for r in 0..right {
            for i in 0..n {
                let src = &self.data[left * (i + n * r)..left * (i + 1 + n * r)];
                for ip in 0..nr {
                    let c = m[(ip, i)];
                    if c == T::zero() {
                        continue;
                    }
                    let dst = &mut out[left * (ip + nr * r)..left * (ip + 1 + nr * r)];
                    for (o, &x) in dst.iter_mut().zip(src) {
                        *o += c * x;
                    }
                }
            }
        }
        Ok(Self { dims, data: out })
    }

    /// Applies one optional matrix per mode.
    pub fn multi_mode_multiply(&self, mats: &[Option<&Matrix<T>>]) -> Result<Self> {
        if mats.len() != self.order() {
            return Err(invalid("one optional matrix per mode expected"));
        }
        let mut out = self.clone();
        for (mu, m) in mats.iter().enumerate() {
            if let Some(m) = m {
                out = out.mode_multiply(m, mu)?;
            }
        }
        Ok(out)
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> DenseTensor<U> {
        DenseTensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
        }
    }
}

/// Free-function form of [`DenseTensor::matricize`].
pub fn matricize<T: Scalar>(x: &DenseTensor<T>, split: &[usize]) -> Result<Matrix<T>> {
    x.matricize(split)
}

/// Free-function form of [`DenseTensor::mode_multiply`].
pub fn mode_multiply<T: Scalar>(x: &DenseTensor<T>, m: &Matrix<T>, mu: usize) -> Result<DenseTensor<T>> {
    x.mode_multiply(m, mu)
}

/// Free-function form of [`DenseTensor::inner`].
pub fn inner<T: Scalar>(x: &DenseTensor<T>, y: &DenseTensor<T>) -> Result<T> {
    x.inner(y)
}

fn split_modes(d: usize, split: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rows: Vec<usize> = split.to_vec();
    rows.sort_unstable();
    rows.dedup();
    if rows.is_empty() || rows.len() >= d {
        return Err(invalid("split must be a nonempty proper subset of the modes"));
    }
    if rows.iter().any(|&m| m >= d) {
        return Err(invalid(format!("split {split:?} refers to a missing mode")));
    }
    let cols = (0..d).filter(|m| !rows.contains(m)).collect();
    Ok((rows, cols))
}

fn is_prefix(modes: &[usize]) -> bool {
    modes.iter().enumerate().all(|(i, &m)| i == m)
}

/// Advances a column-major multi-index.
pub(crate) fn increment(idx: &mut [usize], dims: &[usize]) {
    for (i, &n) in idx.iter_mut().zip(dims) {
        *i += 1;
        if *i < n {
            return;
        }
        *i = 0;
    }
}
