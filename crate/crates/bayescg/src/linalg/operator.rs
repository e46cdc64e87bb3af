//! Symmetric positive (semi-)definite operators applied matrix-free.

use nalgebra::DMatrix;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::csr::CsrMatrix;
use super::triangular::TriangularFactor;
use super::vec::dot;
use crate::error::{Error, Result};

/// Dimension below which the dense product stays on one thread.
const PAR_MIN_DIM: usize = 1024;

/// Symmetric positive (semi-)definite operator.
///
/// Positive semi-definiteness is a caller contract; `psd_probe` offers a
/// randomized spot check. Solvers only ever call `apply`, so preconditioned
/// operators are never materialized.
#[derive(Debug, Clone)]
pub enum SpdOperator {
    /// Dense symmetric matrix.
    Dense(DMatrix<f64>),
    /// Sparse symmetric matrix.
    Sparse(CsrMatrix),
    /// Two-sided triangular preconditioning `L^{-1} B L^{-T}` of a sparse
    /// symmetric `B`.
    Preconditioned {
        factor: TriangularFactor,
        inner: CsrMatrix,
    },
}

impl SpdOperator {
    pub fn identity(n: usize) -> Self {
        SpdOperator::Sparse(CsrMatrix::identity(n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let trips: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        SpdOperator::Sparse(CsrMatrix::from_triplets(d.len(), &trips).expect("valid triplets"))
    }

    pub fn preconditioned(factor: TriangularFactor, inner: CsrMatrix) -> Result<Self> {
        if factor.dim() != inner.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "factor dimension {} vs matrix dimension {}",
                factor.dim(),
                inner.nrows()
            )));
        }
        Ok(SpdOperator::Preconditioned { factor, inner })
    }

    pub fn dim(&self) -> usize {
        match self {
            SpdOperator::Dense(m) => m.nrows(),
            SpdOperator::Sparse(m) => m.nrows(),
            SpdOperator::Preconditioned { inner, .. } => inner.nrows(),
        }
    }

    pub fn nnz(&self) -> usize {
        match self {
            SpdOperator::Dense(m) => m.len(),
            SpdOperator::Sparse(m) => m.nnz(),
            SpdOperator::Preconditioned { inner, factor } => inner.nnz() + factor.nnz(),
        }
    }

    /// `y = A x`. Serial reference path.
    pub fn apply_serial_into(&self, x: &[f64], y: &mut [f64]) {
        self.check_dim(x.len());
        match self {
            SpdOperator::Dense(m) => dense_symv_serial(m, x, y),
            SpdOperator::Sparse(m) => m.apply_serial_into(x, y),
            SpdOperator::Preconditioned { factor, inner } => {
                let u = factor.transpose_solve(x);
                let mut w = vec![0.0; inner.nrows()];
                inner.apply_serial_into(&u, &mut w);
                let z = factor.forward_solve(&w);
                y.copy_from_slice(&z);
            }
        }
    }

    /// `y = A x`. Uses the rayon pool for large operands when the `parallel`
    /// feature is on; results are bit-identical to the serial path.
    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.check_dim(x.len());
        match self {
            SpdOperator::Dense(m) => {
                #[cfg(feature = "parallel")]
                if m.nrows() >= PAR_MIN_DIM {
                    dense_symv_parallel(m, x, y);
                    return;
                }
                dense_symv_serial(m, x, y)
            }
            SpdOperator::Sparse(m) => m.apply_into(x, y),
            SpdOperator::Preconditioned { factor, inner } => {
                let u = factor.transpose_solve(x);
                let mut w = vec![0.0; inner.nrows()];
                inner.apply_into(&u, &mut w);
                let z = factor.forward_solve(&w);
                y.copy_from_slice(&z);
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y);
        y
    }

    /// Dense materialization by `n` applications to unit vectors (test scale).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        match self {
            SpdOperator::Dense(m) => m.clone(),
            _ => {
                let mut out = DMatrix::zeros(n, n);
                let mut e = vec![0.0; n];
                let mut col = vec![0.0; n];
                for j in 0..n {
                    e[j] = 1.0;
                    self.apply_into(&e, &mut col);
                    e[j] = 0.0;
                    for i in 0..n {
                        out[(i, j)] = col[i];
                    }
                }
                out
            }
        }
    }

    /// Largest symmetry defect `|y^T A x - x^T A y|` over random probes,
    /// scaled by the probe magnitudes.
    pub fn symmetry_defect(&self, trials: usize, seed: u64) -> f64 {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for _ in 0..trials {
            let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let ax = self.apply(&x);
            let ay = self.apply(&y);
            let lhs = dot(&y, &ax);
            let rhs = dot(&x, &ay);
            let scale = lhs.abs().max(rhs.abs()).max(1e-300);
            worst = worst.max((lhs - rhs).abs() / scale);
        }
        worst
    }

    /// Randomized positive semi-definiteness probe: smallest Rayleigh
    /// quotient seen over `trials` random directions.
    pub fn psd_probe(&self, trials: usize, seed: u64) -> f64 {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed.wrapping_add(1));
        let n = self.dim();
        let mut min_q = f64::INFINITY;
        for _ in 0..trials {
            let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let nx2 = dot(&x, &x);
            if nx2 == 0.0 {
                continue;
            }
            let q = dot(&x, &self.apply(&x)) / nx2;
            min_q = min_q.min(q);
        }
        min_q
    }

    fn check_dim(&self, len: usize) {
        assert_eq!(
            len,
            self.dim(),
            "operator dimension {} does not match vector length {len}",
            self.dim()
        );
    }
}

/// Squared A-norm `x^T A x`.
pub fn a_norm_sq(a: &SpdOperator, x: &[f64]) -> f64 {
    dot(x, &a.apply(x))
}

fn dense_symv_serial(m: &DMatrix<f64>, x: &[f64], y: &mut [f64]) {
    let n = m.nrows();
    let data = m.as_slice();
    for i in 0..n {
        // row i of a symmetric matrix is its (contiguous) column i
        y[i] = dot(&data[i * n..(i + 1) * n], x);
    }
}

#[cfg(feature = "parallel")]
fn dense_symv_parallel(m: &DMatrix<f64>, x: &[f64], y: &mut [f64]) {
    let n = m.nrows();
    let data = m.as_slice();
    y.par_iter_mut()
        .enumerate()
        .for_each(|(i, yi)| *yi = dot(&data[i * n..(i + 1) * n], x));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_norm_identity() {
        let a = SpdOperator::identity(3);
        assert_eq!(a_norm_sq(&a, &[1.0, 2.0, 2.0]), 9.0);
    }

    #[test]
    fn a_norm_diagonal() {
        let a = SpdOperator::from_diagonal(&[2.0, 0.5]);
        assert_eq!(a_norm_sq(&a, &[1.0, 2.0]), 4.0);
    }

    #[test]
    fn dense_apply_matches_materialization() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, -0.2, 0.5, -0.2, 5.0]);
        let a = SpdOperator::Dense(m.clone());
        let x = [0.3, -1.0, 2.0];
        let y = a.apply(&x);
        let yd = &m * nalgebra::DVector::from_column_slice(&x);
        for i in 0..3 {
            assert!((y[i] - yd[i]).abs() < 1e-14);
        }
        let back = a.to_dense();
        assert!((back - m).abs().max() < 1e-12);
    }

    #[test]
    fn preconditioned_operator_is_symmetric() {
        // B tridiagonal SPD, L its diagonal square root: A = L^{-1} B L^{-T}.
        let n = 12;
        let mut trips = Vec::new();
        for i in 0..n {
            trips.push((i, i, 4.0 + i as f64));
            if i + 1 < n {
                trips.push((i, i + 1, -1.0));
                trips.push((i + 1, i, -1.0));
            }
        }
        let b = CsrMatrix::from_triplets(n, &trips).unwrap();
        let d: Vec<f64> = (0..n).map(|i| (4.0 + i as f64).sqrt()).collect();
        let l = TriangularFactor::diagonal_from(&d).unwrap();
        let a = SpdOperator::preconditioned(l, b).unwrap();
        assert!(a.symmetry_defect(8, 7) < 1e-12);
        assert!(a.psd_probe(8, 7) > 0.0);
        // unit diagonal after symmetric scaling by sqrt(diag)
        let dense = a.to_dense();
        for i in 0..n {
            assert!((dense[(i, i)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linearity_probe() {
        let a = SpdOperator::from_diagonal(&[1.0, 2.0, 3.0]);
        let x = [1.0, 0.5, -2.0];
        let y = [0.0, 1.0, 4.0];
        let mut combo = [0.0; 3];
        for i in 0..3 {
            combo[i] = 2.0 * x[i] - 3.0 * y[i];
        }
        let lhs = a.apply(&combo);
        let ax = a.apply(&x);
        let ay = a.apply(&y);
        for i in 0..3 {
            assert!((lhs[i] - (2.0 * ax[i] - 3.0 * ay[i])).abs() < 1e-12);
        }
    }
}
