//! Conjugate gradient solvers that carry a Gaussian belief about the
//! solution: classic CG, Bayesian CG under general (possibly singular)
//! priors, low-rank Krylov posteriors maintained in factored form, and
//! calibrated error estimates with one-sided credible intervals.
//!
//! The crate is organized around a few layers:
//!
//! - [`linalg`]: vectors, symmetric operators (dense / CSR / triangular-
//!   preconditioned), CGS2 orthogonalization, and dense spectral helpers.
//! - [`problem`]: benchmark problem generators (prescribed-spectrum random
//!   matrices, Matrix Market ingestion, diagonal shifting, threshold
//!   incomplete Cholesky).
//! - [`cg`] / [`solver`] / [`krylov`]: the solvers. `cg` is plain
//!   Hestenes-Stiefel; `solver` runs the posterior-updating recursion under
//!   an arbitrary prior; `krylov` produces CG-identical means plus factored
//!   rank-d posterior covariances from delay iterations.
//! - [`gaussian`] / [`uq`]: Gaussian conditioning and sampling, quadratic
//!   form moments, and the credible-interval error estimates.
//! - [`harness`]: reproducible experiment runs emitting CSV artifacts.
//!
//! The `parallel` feature (on by default) enables rayon data-parallel
//! kernels for large operators, reorthogonalization, and Monte Carlo
//! sampling; the serial fallback produces bit-identical results.

pub use nalgebra;

pub mod cg;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod krylov;
pub mod linalg;
pub mod problem;
pub mod solver;
pub mod uq;

pub use cg::{cg_solve, cg_solve_with_truth, hs_error_identity_check, CgConfig, SolveTrace, Termination};
pub use error::{Error, Result};
pub use gaussian::{condition_on_linear, trace_quadratic, variance_quadratic, Covariance, Gaussian};
pub use krylov::{
    approx_prior_equivalence_check, bayescg_krylov_solve, build_full_krylov_prior,
    krylov_full_run, phi_alternative, KrylovFactors,
};
pub use linalg::{a_norm_sq, cgs2_orthonormalize, pseudo_inverse_apply, CsrMatrix, SpdOperator, TriangularFactor};
pub use solver::{bayescg_solve, optimality_check, posterior_projector, BayesCgConfig, BayesCgPosterior, Prior, PriorSpec};
pub use uq::{credible_interval, erf, erf_inverse, relative_accuracy, s_statistic_samples, EmpiricalEstimate, ErrorEstimate};
