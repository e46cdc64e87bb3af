//! Sparse lower-triangular factors with forward/transpose substitution.

use crate::error::{Error, Result};

/// Lower-triangular sparse factor stored by rows. Each row holds the strictly
/// lower entries (columns < i, increasing) followed by the diagonal.
#[derive(Debug, Clone)]
pub struct TriangularFactor {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    unit_diagonal: bool,
}

impl TriangularFactor {
    /// Builds from per-row (col, value) lists. Every row must contain its
    /// diagonal entry unless `unit_diagonal` is set.
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>, unit_diagonal: bool) -> Result<Self> {
        if rows.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} rows for dimension {n}",
                rows.len()
            )));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            let mut saw_diag = false;
            for &(j, v) in &row {
                if j > i {
                    return Err(Error::InvalidParameter(format!(
                        "entry ({i}, {j}) above the diagonal"
                    )));
                }
                if j == i {
                    saw_diag = true;
                    if v == 0.0 {
                        return Err(Error::Singular(format!("zero diagonal in row {i}")));
                    }
                }
                col_idx.push(j);
                values.push(v);
            }
            if !saw_diag && !unit_diagonal {
                return Err(Error::Singular(format!("missing diagonal in row {i}")));
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
            unit_diagonal,
        })
    }

    pub fn diagonal_from(values: &[f64]) -> Result<Self> {
        let rows = values
            .iter()
            .enumerate()
            .map(|(i, &v)| vec![(i, v)])
            .collect();
        Self::from_rows(values.len(), rows, false)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Number of stored entries strictly below the diagonal.
    pub fn off_diagonal_nnz(&self) -> usize {
        let mut count = 0;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[k] < i {
                    count += 1;
                }
            }
        }
        count
    }

    fn diag_at(&self, i: usize) -> f64 {
        if self.unit_diagonal {
            return 1.0;
        }
        for k in (self.row_ptr[i]..self.row_ptr[i + 1]).rev() {
            if self.col_idx[k] == i {
                return self.values[k];
            }
        }
        unreachable!("diagonal presence is validated at construction")
    }

    /// Solves `L y = b` by forward substitution.
    pub fn forward_solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut y = b.to_vec();
        for i in 0..self.n {
            let mut acc = y[i];
            let mut diag = 1.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                if j < i {
                    acc -= self.values[k] * y[j];
                } else {
                    diag = self.values[k];
                }
            }
            y[i] = if self.unit_diagonal { acc } else { acc / diag };
        }
        y
    }

    /// Solves `L^T y = b` by backward substitution on the rows of `L`.
    pub fn transpose_solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut y = b.to_vec();
        for i in (0..self.n).rev() {
            let d = self.diag_at(i);
            let yi = y[i] / d;
            y[i] = yi;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                if j < i {
                    y[j] -= self.values[k] * yi;
                }
            }
        }
        y
    }

    /// `L x` (used by tests to verify substitution residuals).
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let mut acc = if self.unit_diagonal { x[i] } else { 0.0 };
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
        y
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            if self.unit_diagonal {
                m[(i, i)] = 1.0;
            }
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col_idx[k])] = self.values[k];
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::vec::{norm2, sub};

    fn factor() -> TriangularFactor {
        TriangularFactor::from_rows(
            3,
            vec![
                vec![(0, 2.0)],
                vec![(0, 1.0), (1, 3.0)],
                vec![(0, 0.5), (1, -1.0), (2, 4.0)],
            ],
            false,
        )
        .unwrap()
    }

    #[test]
    fn forward_solve_residual_small() {
        let l = factor();
        let b = vec![2.0, 5.0, 1.5];
        let y = l.forward_solve(&b);
        let r = sub(&l.apply(&y), &b);
        assert!(norm2(&r) <= 1e-14 * norm2(&b));
    }

    #[test]
    fn transpose_solve_matches_dense() {
        let l = factor();
        let b = vec![1.0, -2.0, 3.0];
        let y = l.transpose_solve(&b);
        let lt = l.to_dense().transpose();
        let back = lt * nalgebra::DVector::from_column_slice(&y);
        for (a, e) in back.iter().zip(&b) {
            assert!((a - e).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_diagonal_rejected() {
        let err = TriangularFactor::from_rows(1, vec![vec![(0, 0.0)]], false);
        assert!(err.is_err());
    }
}
