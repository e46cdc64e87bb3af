//! Minimal dense/sparse linear algebra substrate: vectors, symmetric
//! operators, triangular factors, orthogonalization, and dense spectral
//! helpers for oracle-scale work.

pub mod csr;
pub mod eig;
pub mod operator;
pub mod orth;
pub mod triangular;
pub mod vec;

pub use csr::CsrMatrix;
pub use eig::{pseudo_inverse, pseudo_inverse_apply, symmetric_eigen, DEFAULT_RANK_TOL, MAX_DENSE_DIM};
pub use operator::{a_norm_sq, SpdOperator};
pub use orth::{cgs2_orthonormalize, Inner, OrthoBasis};
pub use triangular::TriangularFactor;
