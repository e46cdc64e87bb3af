//! Dense symmetric eigendecomposition helpers: pseudo-inverses and PSD
//! square-root factors. Test/oracle-scale only; solver iterations never call
//! into this module.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest dimension for which dense eigendecompositions are permitted.
pub const MAX_DENSE_DIM: usize = 512;

/// Default relative cutoff for treating eigenvalues as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

fn check_dense_dim(n: usize) -> Result<()> {
    if n > MAX_DENSE_DIM {
        return Err(Error::Unsupported(format!(
            "dense eigendecomposition limited to n <= {MAX_DENSE_DIM}, got {n}"
        )));
    }
    Ok(())
}

pub fn check_symmetric(s: &DMatrix<f64>, tol: f64) -> Result<()> {
    if s.nrows() != s.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix is not square",
            s.nrows(),
            s.ncols()
        )));
    }
    let scale = s.abs().max().max(1e-300);
    let defect = (s - s.transpose()).abs().max();
    if defect > tol * scale {
        return Err(Error::NotSymmetric(format!(
            "relative asymmetry {:.3e}",
            defect / scale
        )));
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
pub fn symmetric_eigen(s: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_dense_dim(s.nrows())?;
    check_symmetric(s, 1e-8)?;
    // symmetrize so roundoff asymmetry cannot perturb the decomposition
    let sym = (s + s.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let n = s.nrows();
    let mut values = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &idx) in order.iter().enumerate() {
        values[k] = eig.eigenvalues[idx];
        vectors.set_column(k, &eig.eigenvectors.column(idx));
    }
    Ok((values, vectors))
}

/// Applies the Moore-Penrose inverse of a symmetric PSD matrix to a vector.
///
/// Eigenvalues below `rank_tol * lambda_max` are truncated to zero.
pub fn pseudo_inverse_apply(s: &DMatrix<f64>, x: &[f64], rank_tol: f64) -> Result<Vec<f64>> {
    if x.len() != s.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "vector length {} vs matrix dimension {}",
            x.len(),
            s.nrows()
        )));
    }
    let (values, vectors) = symmetric_eigen(s)?;
    let lambda_max = values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let cutoff = rank_tol * lambda_max;
    let xv = DVector::from_column_slice(x);
    let mut coeffs = vectors.transpose() * xv;
    for (k, c) in coeffs.iter_mut().enumerate() {
        let lam = values[k];
        *c = if lam.abs() > cutoff { *c / lam } else { 0.0 };
    }
    let y = vectors * coeffs;
    Ok(y.as_slice().to_vec())
}

/// Moore-Penrose inverse of a symmetric PSD matrix (oracle scale).
pub fn pseudo_inverse(s: &DMatrix<f64>, rank_tol: f64) -> Result<DMatrix<f64>> {
    let (values, vectors) = symmetric_eigen(s)?;
    let lambda_max = values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let cutoff = rank_tol * lambda_max;
    let n = s.nrows();
    let mut scaled = DMatrix::zeros(n, n);
    for k in 0..n {
        let lam = values[k];
        let inv = if lam.abs() > cutoff { 1.0 / lam } else { 0.0 };
        scaled.set_column(k, &(vectors.column(k) * inv));
    }
    Ok(scaled * vectors.transpose())
}

/// Square-root factor of a symmetric matrix via the spectral absolute value:
/// negative eigenvalues are flipped, eigenvalues below `1e-14 * lambda_max`
/// are dropped. Returns the factor `F` with `F F^T ~= abs(S)` and the most
/// negative eigenvalue encountered.
pub fn sqrt_factor_abs(s: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let (values, vectors) = symmetric_eigen(s)?;
    let lambda_max = values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let min_eig = values.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let cutoff = 1e-14 * lambda_max;
    let keep: Vec<usize> = (0..values.len())
        .filter(|&k| values[k].abs() > cutoff)
        .collect();
    let n = s.nrows();
    let mut f = DMatrix::zeros(n, keep.len());
    for (col, &k) in keep.iter().enumerate() {
        let root = values[k].abs().sqrt();
        f.set_column(col, &(vectors.column(k) * root));
    }
    Ok((f, min_eig))
}
