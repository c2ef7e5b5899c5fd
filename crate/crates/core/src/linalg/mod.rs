//! Dense matrices and the factorizations the tensor code is built on.

mod decomp;
mod matrix;

pub use decomp::{
    cholesky, gram, inv_sqrt_spd, numerical_rank, orthonormal_complement, qr, solve_lower,
    solve_lower_transpose, spd_condition, spd_solve, spectral_norm, svd, sym_eig, Qr, SvdResult,
};
pub use matrix::{dot, norm2, Matrix};
