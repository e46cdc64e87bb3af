//! Diagonal shifting and threshold incomplete Cholesky (ICT) factorization.

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, TriangularFactor};

/// Smallest multiplier `c` for which `B + c * diag(B)` is diagonally
/// dominant when all diagonal entries are at least one:
/// `max_i { -b_ii + sum_{j != i} |b_ij| }`.
pub fn dominance_shift_constant(b: &CsrMatrix) -> Result<f64> {
    let n = b.nrows();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        let mut diag = 0.0;
        let mut off = 0.0;
        for (j, v) in b.row(i) {
            if j == i {
                diag = v;
            } else {
                off += v.abs();
            }
        }
        if diag == 0.0 {
            return Err(Error::Singular(format!("zero diagonal entry in row {i}")));
        }
        worst = worst.max(off - diag);
    }
    Ok(worst)
}

/// `B + c * diag(B)`; requires nonzero diagonal entries.
pub fn diagonal_shift(b: &CsrMatrix, c: f64) -> Result<CsrMatrix> {
    let n = b.nrows();
    let mut triplets = Vec::with_capacity(b.nnz());
    for i in 0..n {
        let mut saw_diag = false;
        for (j, v) in b.row(i) {
            if j == i {
                saw_diag = true;
                triplets.push((i, j, v + c * v));
            } else {
                triplets.push((i, j, v));
            }
        }
        if !saw_diag {
            return Err(Error::Singular(format!("zero diagonal entry in row {i}")));
        }
    }
    CsrMatrix::from_triplets(n, &triplets)
}

/// Row-wise weak diagonal dominance check with a small relative slack.
pub fn is_diagonally_dominant(b: &CsrMatrix) -> bool {
    let n = b.nrows();
    for i in 0..n {
        let mut diag = 0.0;
        let mut off = 0.0;
        for (j, v) in b.row(i) {
            if j == i {
                diag = v;
            } else {
                off += v.abs();
            }
        }
        if diag < off * (1.0 - 1e-12) {
            return false;
        }
    }
    true
}

/// Shifts `B` just enough to force diagonal dominance and reports the
/// multiplier used (clamped at zero when `B` is already dominant).
pub fn shift_to_dominance(b: &CsrMatrix) -> Result<(CsrMatrix, f64)> {
    let c = dominance_shift_constant(b)?.max(0.0);
    let shifted = diagonal_shift(b, c)?;
    if !is_diagonally_dominant(&shifted) {
        return Err(Error::InvalidParameter(format!(
            "shift {c:e} failed to make the matrix diagonally dominant \
             (a diagonal entry is below one)"
        )));
    }
    Ok((shifted, c))
}

/// Threshold incomplete Cholesky: column-oriented left-looking factorization
/// where `l_ij` is dropped when `|l_ij| < drop_tol * ||B[:, j]||_2`.
///
/// A drop tolerance of zero reproduces the complete factorization. Breakdown
/// (non-positive pivot) reports the offending row; it cannot occur for
/// strictly diagonally dominant input.
pub fn incomplete_cholesky_threshold(b: &CsrMatrix, drop_tol: f64) -> Result<TriangularFactor> {
    if drop_tol < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "drop tolerance must be nonnegative, got {drop_tol}"
        )));
    }
    let n = b.nrows();

    // 2-norms of the columns of B (B symmetric: column norm = row norm)
    let col_norms: Vec<f64> = (0..n)
        .map(|i| b.row(i).map(|(_, v)| v * v).sum::<f64>().sqrt())
        .collect();

    // columns of L built so far; row_links[i] lists (col j, l_ij) for j < i
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut row_links: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut dense = vec![0.0f64; n];
    let mut pattern: Vec<usize> = Vec::new();

    for j in 0..n {
        // scatter the lower part of column j of B
        let mut diag = 0.0;
        for (col, v) in b.row(j) {
            // row j of B = column j of B by symmetry
            if col > j {
                if dense[col] == 0.0 {
                    pattern.push(col);
                }
                dense[col] += v;
            } else if col == j {
                diag += v;
            }
        }
        // subtract contributions of earlier columns k with l_jk != 0
        for link_idx in 0..row_links[j].len() {
            let (k, l_jk) = row_links[j][link_idx];
            diag -= l_jk * l_jk;
            for &(i, l_ik) in &cols[k] {
                if i > j {
                    if dense[i] == 0.0 {
                        pattern.push(i);
                    }
                    dense[i] -= l_ik * l_jk;
                }
            }
        }
        if diag <= 0.0 {
            return Err(Error::FactorizationBreakdown { row: j, pivot: diag });
        }
        let l_jj = diag.sqrt();
        let threshold = drop_tol * col_norms[j];
        let mut col_entries = Vec::new();
        pattern.sort_unstable();
        for &i in &pattern {
            let l_ij = dense[i] / l_jj;
            dense[i] = 0.0;
            if l_ij.abs() >= threshold && l_ij != 0.0 {
                col_entries.push((i, l_ij));
                row_links[i].push((j, l_ij));
            }
        }
        pattern.clear();
        cols[j] = col_entries;
        cols[j].insert(0, (j, l_jj));
    }

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (j, col) in cols.into_iter().enumerate() {
        for (i, v) in col {
            rows[i].push((j, v));
        }
    }
    TriangularFactor::from_rows(n, rows, false)
}
