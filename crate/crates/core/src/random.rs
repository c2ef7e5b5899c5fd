//! Seeded random instances for tests and experiment sweeps.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::linalg::{qr, Matrix};
use crate::manifold::{Core, ManifoldPoint};
use crate::scalar::Scalar;
use crate::tensor::DenseTensor;
use crate::tt::TtTensor;

/// Portable seeded generator; the stream is fixed for a given seed.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::of(rng.sample::<f64, _>(StandardNormal))
}

pub fn random_vec<T: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<T> {
    (0..n).map(|_| normal(rng)).collect()
}

pub fn random_matrix<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix<T> {
    Matrix::from_col_major(rows, cols, random_vec(rows * cols, rng)).expect("shape")
}

/// Orthonormal columns from the QR factor of a Gaussian matrix.
pub fn random_orthonormal<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix<T> {
    qr(&random_matrix(rows, cols, rng)).q
}

pub fn random_tensor<T: Scalar, R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<DenseTensor<T>> {
    DenseTensor::new(dims.to_vec(), random_vec(dims.iter().product(), rng))
}

/// Gaussian cores with the given interior ranks.
pub fn random_tt<T: Scalar, R: Rng + ?Sized>(dims: &[usize], ranks: &[usize], rng: &mut R) -> Result<TtTensor<T>> {
    let full: Vec<usize> = std::iter::once(1)
        .chain(ranks.iter().copied())
        .chain(std::iter::once(1))
        .collect();
    let cores = dims
        .iter()
        .enumerate()
        .map(|(mu, &n)| random_tensor(&[full[mu], n, full[mu + 1]], rng))
        .collect::<Result<Vec<_>>>()?;
    TtTensor::new(cores)
}

/// Random point with orthonormal factors; a TT core when `tt_ranks` is given,
/// otherwise a dense Tucker core.
pub fn random_point<T: Scalar, R: Rng + ?Sized>(
    dims: &[usize],
    outer: &[usize],
    tt_ranks: Option<&[usize]>,
    rng: &mut R,
) -> Result<ManifoldPoint<T>> {
    let core = match tt_ranks {
        Some(k) => Core::Tt(random_tt(outer, k, rng)?),
        None => Core::Dense(random_tensor(outer, rng)?),
    };
    let factors = dims
        .iter()
        .zip(outer)
        .map(|(&n, &r)| random_orthonormal(n, r, rng))
        .collect();
    ManifoldPoint::new(core, factors)
}
