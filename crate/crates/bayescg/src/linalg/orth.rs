//! Twice-repeated classical Gram-Schmidt (CGS2) orthogonalization.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::operator::SpdOperator;
use super::vec::{axpy, dot, norm2, scale};

/// Relative threshold below which an orthogonalized vector is declared
/// numerically dependent and replaced by zero.
const DEPENDENCE_TOL: f64 = 1e-13;

/// Basis length below which the projection kernels stay serial.
const PAR_MIN_WORK: usize = 1 << 16;

/// Inner product against which vectors are orthogonalized.
#[derive(Clone, Copy)]
pub enum Inner<'a> {
    Euclidean,
    /// `<x, y> = x^T A y` for a symmetric positive definite `A`.
    Weighted(&'a SpdOperator),
}

/// Removes from `v` its components along the given orthonormal basis using
/// classical Gram-Schmidt applied twice.
///
/// Returns the zero vector when `v` lies in the span of the basis to working
/// precision. The input basis is assumed orthonormal in the given inner
/// product; the result is not normalized (an empty basis returns `v`
/// unchanged).
pub fn cgs2_orthonormalize(basis: &[Vec<f64>], v: &[f64], inner: Inner<'_>) -> Vec<f64> {
    let mut w = v.to_vec();
    if basis.is_empty() {
        return w;
    }
    let ref_norm = inner_norm(v, inner);
    for _ in 0..2 {
        let iw = apply_inner(&w, inner);
        let coeffs: Vec<f64> = basis.iter().map(|q| dot(q, &iw)).collect();
        for (q, c) in basis.iter().zip(&coeffs) {
            axpy(-c, q, &mut w);
        }
    }
    if inner_norm(&w, inner) <= DEPENDENCE_TOL * ref_norm {
        w.iter_mut().for_each(|x| *x = 0.0);
    }
    w
}

fn apply_inner(v: &[f64], inner: Inner<'_>) -> Vec<f64> {
    match inner {
        Inner::Euclidean => v.to_vec(),
        Inner::Weighted(a) => a.apply(v),
    }
}

fn inner_norm(v: &[f64], inner: Inner<'_>) -> f64 {
    match inner {
        Inner::Euclidean => norm2(v),
        Inner::Weighted(a) => dot(v, &a.apply(v)).max(0.0).sqrt(),
    }
}

/// Growing orthonormal basis (Euclidean inner product) with contiguous
/// storage, used for residual reorthogonalization inside the solvers.
///
/// The projection kernels run serially or data-parallel over vector chunks;
/// every component is reduced in the same fixed order, so both paths produce
/// bit-identical vectors.
#[derive(Debug, Clone)]
pub struct OrthoBasis {
    n: usize,
    data: Vec<f64>,
}

impl OrthoBasis {
    pub fn new(n: usize) -> Self {
        Self { n, data: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn vector(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    /// Normalizes `v` and appends it. Returns false (and appends nothing)
    /// when `v` is numerically zero.
    pub fn push_normalized(&mut self, v: &[f64]) -> bool {
        assert_eq!(v.len(), self.n);
        let nv = norm2(v);
        if nv == 0.0 || !nv.is_finite() {
            return false;
        }
        let start = self.data.len();
        self.data.extend_from_slice(v);
        scale(1.0 / nv, &mut self.data[start..]);
        true
    }

    fn coefficients(&self, v: &[f64]) -> Vec<f64> {
        let m = self.len();
        let n = self.n;
        #[cfg(feature = "parallel")]
        if m * n >= PAR_MIN_WORK {
            return (0..m)
                .into_par_iter()
                .map(|j| dot(&self.data[j * n..(j + 1) * n], v))
                .collect();
        }
        (0..m).map(|j| dot(&self.data[j * n..(j + 1) * n], v)).collect()
    }

    /// `v -= sum_j c_j q_j`, accumulated per component in basis order.
    fn subtract_projection(&self, v: &mut [f64], coeffs: &[f64]) {
        let n = self.n;
        let m = self.len();
        let work = m * n;
        let apply_chunk = |offset: usize, chunk: &mut [f64]| {
            for (j, &c) in coeffs.iter().enumerate() {
                let q = &self.data[j * n + offset..j * n + offset + chunk.len()];
                for (vi, qi) in chunk.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        };
        #[cfg(feature = "parallel")]
        if work >= PAR_MIN_WORK {
            let chunk = usize::max(1024, n / (4 * rayon::current_num_threads().max(1)));
            v.par_chunks_mut(chunk).enumerate().for_each(|(k, ch)| {
                apply_chunk(k * chunk, ch);
            });
            return;
        }
        let _ = work;
        apply_chunk(0, v);
    }

    /// CGS2 against the stored basis, in place. Returns the Euclidean norm of
    /// the result, or zero when `v` was numerically dependent.
    pub fn orthogonalize(&self, v: &mut [f64]) -> f64 {
        assert_eq!(v.len(), self.n);
        if self.is_empty() {
            return norm2(v);
        }
        let ref_norm = norm2(v);
        for _ in 0..2 {
            let coeffs = self.coefficients(v);
            self.subtract_projection(v, &coeffs);
        }
        let nv = norm2(v);
        if nv <= DEPENDENCE_TOL * ref_norm {
            v.iter_mut().for_each(|x| *x = 0.0);
            return 0.0;
        }
        nv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn removes_spanned_component() {
        let basis = vec![vec![1.0, 0.0]];
        let w = cgs2_orthonormalize(&basis, &[1.0, 1.0], Inner::Euclidean);
        assert!((w[0]).abs() < 1e-15);
        assert!((w[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_basis_returns_input() {
        let w = cgs2_orthonormalize(&[], &[3.0, 0.0], Inner::Euclidean);
        assert_eq!(w, vec![3.0, 0.0]);
    }

    #[test]
    fn dependent_vector_becomes_zero() {
        let basis = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let w = cgs2_orthonormalize(&basis, &[0.3, -0.7], Inner::Euclidean);
        assert!(w.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn weighted_inner_orthogonality() {
        let a = SpdOperator::from_diagonal(&[4.0, 1.0]);
        // e1/2 is A-orthonormal; orthogonalize (1,1) against it
        let basis = vec![vec![0.5, 0.0]];
        let w = cgs2_orthonormalize(&basis, &[1.0, 1.0], Inner::Weighted(&a));
        let q = &basis[0];
        let aw = a.apply(&w);
        assert!(dot(q, &aw).abs() < 1e-12);
    }

    #[test]
    fn basis_orthogonalize_idempotent() {
        let mut basis = OrthoBasis::new(4);
        basis.push_normalized(&[1.0, 1.0, 0.0, 0.0]);
        basis.push_normalized(&[0.0, 0.0, 1.0, 2.0]);
        let mut v = vec![0.3, -0.2, 0.8, 0.1];
        basis.orthogonalize(&mut v);
        let mut w = v.clone();
        basis.orthogonalize(&mut w);
        let dv: f64 = v.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dv <= 1e-14 * norm2(&v).max(1.0));
    }
}
