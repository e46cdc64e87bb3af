//! Lanczos iteration with full reorthogonalization for extremal Ritz values.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::linalg::vec::{axpy, dot, norm2, scale};
use crate::linalg::{OrthoBasis, SpdOperator};

/// Extremal Ritz values of `A` from at most `steps` Lanczos iterations with
/// full reorthogonalization, started from a seeded random vector.
///
/// Returns `(ritz_min, ritz_max)`. The estimates converge to the extreme
/// eigenvalues from inside the spectrum.
pub fn extremal_ritz_values(a: &SpdOperator, steps: usize, seed: u64) -> Result<(f64, f64)> {
    let n = a.dim();
    if steps == 0 {
        return Err(Error::InvalidParameter("lanczos needs steps >= 1".into()));
    }
    let steps = steps.min(n);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let nq = norm2(&q);
    scale(1.0 / nq, &mut q);

    let mut basis = OrthoBasis::new(n);
    basis.push_normalized(&q);

    let mut alphas: Vec<f64> = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::with_capacity(steps);

    let mut q_prev: Vec<f64> = vec![0.0; n];
    let mut beta_prev = 0.0;
    for _ in 0..steps {
        let mut w = a.apply(&q);
        let alpha = dot(&q, &w);
        axpy(-alpha, &q, &mut w);
        if beta_prev != 0.0 {
            axpy(-beta_prev, &q_prev, &mut w);
        }
        // full reorthogonalization keeps the Ritz values reliable
        let beta = basis.orthogonalize(&mut w);
        alphas.push(alpha);
        if beta == 0.0 {
            break;
        }
        betas.push(beta);
        scale(1.0 / beta, &mut w);
        q_prev = std::mem::replace(&mut q, w.clone());
        beta_prev = beta;
        basis.push_normalized(&w);
    }

    let k = alphas.len();
    let mut t = nalgebra::DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = t.symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_diagonal_spectrum_bounds() {
        let d: Vec<f64> = (1..=30).map(|i| i as f64).collect();
        let a = SpdOperator::from_diagonal(&d);
        let (lo, hi) = extremal_ritz_values(&a, 60, 5).unwrap();
        assert!((lo - 1.0).abs() < 1e-8, "lo = {lo}");
        assert!((hi - 30.0).abs() < 1e-8, "hi = {hi}");
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let a = SpdOperator::identity(5);
        let (lo, hi) = extremal_ritz_values(&a, 10, 1).unwrap();
        assert!((lo - 1.0).abs() < 1e-12);
        assert!((hi - 1.0).abs() < 1e-12);
    }
}
