//! Dynamical low-rank approximation on tensor-train and constrained Tucker
//! manifolds.
//!
//! Everything is generic over [`Scalar`] (`f32`, `f64`); the `F64` aliases
//! below name the double-precision types the experiments use.

pub mod error;
pub mod fem;
pub mod integrator;
pub mod linalg;
pub mod manifold;
pub mod random;
pub mod scalar;
pub mod tangent;
pub mod tensor;
pub mod tt;

pub use error::{Error, Result};
pub use fem::{Diffusion, MassCoordinates, Profile, SeparableSource, SourceTerm, TtOperator};
pub use integrator::{
    solve, EvolutionState, InitialTerm, Problem, ProblemSpec, Scheme, Trajectory,
};
pub use linalg::{Matrix, SvdResult};
pub use manifold::{Core, ManifoldPoint, PointRanks};
pub use scalar::Scalar;
pub use tangent::{CurvatureReport, SigmaKind, TangentVector};
pub use tensor::DenseTensor;
pub use tt::{InterfaceSpectrum, OrthoState, RankSpec, TtTensor};

pub type MatrixF64 = Matrix<f64>;
pub type DenseTensorF64 = DenseTensor<f64>;
pub type TtTensorF64 = TtTensor<f64>;
pub type ManifoldPointF64 = ManifoldPoint<f64>;
